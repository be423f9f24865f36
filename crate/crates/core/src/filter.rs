//! Composable metadata filters.
//!
//! A filter is a tree of comparison leaves joined by `AND`/`OR` branches. Its
//! JSON form is the wire format used by list requests:
//!
//! ```json
//! {"type": "AND", "children": [
//!     {"type": "EQ", "key": "household", "value": "h1"},
//!     {"type": "GT", "key": "stats.mean_reward", "value": 0.5}
//! ]}
//! ```
//!
//! Leaves resolve `key` as a dotted path into the document. A missing key or
//! a value of a different type than the filter value makes the leaf false,
//! for every comparison including `NE`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{BitAnd, BitOr};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::Metadata;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FilterError {
    #[error("unknown filter type `{0}`")]
    UnknownType(String),
    #[error("{kind} filter is missing `{field}`")]
    MissingField { kind: &'static str, field: &'static str },
    #[error("{kind} filter must not carry `{field}`")]
    UnexpectedField { kind: &'static str, field: &'static str },
    #[error("{0} filter needs at least one child")]
    EmptyBranch(&'static str),
    #[error("filter value for key `{0}` must be a string, number or boolean")]
    NonScalarValue(String),
    #[error("malformed filter JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Gt,
    Geq,
    Lt,
    Leq,
}

impl CompareOp {
    pub const ALL: [CompareOp; 6] = [Self::Eq, Self::Ne, Self::Gt, Self::Geq, Self::Lt, Self::Leq];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Eq => "EQ",
            Self::Ne => "NE",
            Self::Gt => "GT",
            Self::Geq => "GEQ",
            Self::Lt => "LT",
            Self::Leq => "LEQ",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.as_str() == s)
    }

    fn holds(self, stored: &Value, wanted: &Value) -> bool {
        let Some(ord) = compare_same_type(stored, wanted) else {
            return false;
        };
        match self {
            Self::Eq => ord == Ordering::Equal,
            Self::Ne => ord != Ordering::Equal,
            // booleans only support equality
            _ if stored.is_boolean() => false,
            Self::Gt => ord == Ordering::Greater,
            Self::Geq => ord != Ordering::Less,
            Self::Lt => ord == Ordering::Less,
            Self::Leq => ord != Ordering::Greater,
        }
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A node of a filter tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFilter", into = "RawFilter")]
pub enum FilterNode {
    Compare {
        op: CompareOp,
        key: String,
        value: Value,
    },
    And(Vec<FilterNode>),
    Or(Vec<FilterNode>),
}

impl FilterNode {
    pub fn compare(op: CompareOp, key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::Compare {
            op,
            key: key.into(),
            value: value.into(),
        }
    }

    pub fn eq(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::compare(CompareOp::Eq, key, value)
    }

    pub fn ne(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::compare(CompareOp::Ne, key, value)
    }

    pub fn gt(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::compare(CompareOp::Gt, key, value)
    }

    pub fn geq(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::compare(CompareOp::Geq, key, value)
    }

    pub fn lt(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::compare(CompareOp::Lt, key, value)
    }

    pub fn leq(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::compare(CompareOp::Leq, key, value)
    }

    /// Conjunction of `children`; fails on an empty list.
    pub fn and(children: Vec<FilterNode>) -> Result<Self, FilterError> {
        if children.is_empty() {
            return Err(FilterError::EmptyBranch("AND"));
        }
        Ok(Self::And(children))
    }

    /// Disjunction of `children`; fails on an empty list.
    pub fn or(children: Vec<FilterNode>) -> Result<Self, FilterError> {
        if children.is_empty() {
            return Err(FilterError::EmptyBranch("OR"));
        }
        Ok(Self::Or(children))
    }

    /// Structural check. Trees built through the constructors are always
    /// valid; hand-assembled variants may not be.
    pub fn validate(&self) -> Result<(), FilterError> {
        match self {
            Self::Compare { key, value, .. } => {
                if is_scalar(value) {
                    Ok(())
                } else {
                    Err(FilterError::NonScalarValue(key.clone()))
                }
            }
            Self::And(children) | Self::Or(children) => {
                if children.is_empty() {
                    return Err(FilterError::EmptyBranch(self.type_name()));
                }
                children.iter().try_for_each(Self::validate)
            }
        }
    }

    /// Evaluates the tree against `doc`. Assumes a valid tree.
    pub fn matches(&self, doc: &Metadata) -> bool {
        match self {
            Self::Compare { op, key, value } => {
                lookup(doc, key).is_some_and(|stored| op.holds(stored, value))
            }
            Self::And(children) => children.iter().all(|c| c.matches(doc)),
            Self::Or(children) => children.iter().any(|c| c.matches(doc)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("filter serialization is infallible")
    }

    pub fn from_json(json: &str) -> Result<Self, FilterError> {
        let raw: RawFilter =
            serde_json::from_str(json).map_err(|e| FilterError::Json(e.to_string()))?;
        Self::try_from(raw)
    }

    fn type_name(&self) -> &'static str {
        match self {
            Self::Compare { op, .. } => op.as_str(),
            Self::And(_) => "AND",
            Self::Or(_) => "OR",
        }
    }
}

impl BitAnd for FilterNode {
    type Output = FilterNode;

    fn bitand(self, rhs: FilterNode) -> FilterNode {
        match self {
            Self::And(mut children) => {
                children.push(rhs);
                Self::And(children)
            }
            lhs => Self::And(vec![lhs, rhs]),
        }
    }
}

impl BitOr for FilterNode {
    type Output = FilterNode;

    fn bitor(self, rhs: FilterNode) -> FilterNode {
        match self {
            Self::Or(mut children) => {
                children.push(rhs);
                Self::Or(children)
            }
            lhs => Self::Or(vec![lhs, rhs]),
        }
    }
}

/// Validates `filter`, then evaluates it against `doc`.
pub fn eval_filter(filter: &FilterNode, doc: &Metadata) -> Result<bool, FilterError> {
    filter.validate()?;
    Ok(filter.matches(doc))
}

/// `None` passes everything.
pub fn passes(filter: Option<&FilterNode>, doc: &Metadata) -> bool {
    filter.is_none_or(|f| f.matches(doc))
}

fn lookup<'a>(doc: &'a Metadata, key: &str) -> Option<&'a Value> {
    let mut parts = key.split('.');
    let mut current = doc.get(parts.next()?)?;
    for part in parts {
        current = current.as_object()?.get(part)?;
    }
    Some(current)
}

fn is_scalar(v: &Value) -> bool {
    matches!(v, Value::String(_) | Value::Number(_) | Value::Bool(_))
}

fn compare_same_type(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::String(x), Value::String(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        (Value::Number(x), Value::Number(y)) => {
            if let (Some(x), Some(y)) = (x.as_i64(), y.as_i64()) {
                Some(x.cmp(&y))
            } else if let (Some(x), Some(y)) = (x.as_u64(), y.as_u64()) {
                Some(x.cmp(&y))
            } else {
                x.as_f64()?.partial_cmp(&y.as_f64()?)
            }
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<String>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "present_value"
    )]
    value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    children: Option<Vec<RawFilter>>,
}

// Keeps an explicit `null` distinguishable from an absent field.
fn present_value<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

impl TryFrom<RawFilter> for FilterNode {
    type Error = FilterError;

    fn try_from(raw: RawFilter) -> Result<Self, FilterError> {
        match raw.kind.as_str() {
            kind @ ("AND" | "OR") => {
                let kind = if kind == "AND" { "AND" } else { "OR" };
                if raw.key.is_some() {
                    return Err(FilterError::UnexpectedField { kind, field: "key" });
                }
                if raw.value.is_some() {
                    return Err(FilterError::UnexpectedField { kind, field: "value" });
                }
                let children = raw
                    .children
                    .ok_or(FilterError::MissingField { kind, field: "children" })?
                    .into_iter()
                    .map(FilterNode::try_from)
                    .collect::<Result<Vec<_>, _>>()?;
                if kind == "AND" {
                    FilterNode::and(children)
                } else {
                    FilterNode::or(children)
                }
            }
            other => {
                let op = CompareOp::parse(other)
                    .ok_or_else(|| FilterError::UnknownType(other.to_string()))?;
                let kind = op.as_str();
                if raw.children.is_some() {
                    return Err(FilterError::UnexpectedField { kind, field: "children" });
                }
                let key = raw.key.ok_or(FilterError::MissingField { kind, field: "key" })?;
                let value = raw.value.ok_or(FilterError::MissingField { kind, field: "value" })?;
                if !is_scalar(&value) {
                    return Err(FilterError::NonScalarValue(key));
                }
                Ok(FilterNode::Compare { op, key, value })
            }
        }
    }
}

impl From<FilterNode> for RawFilter {
    fn from(node: FilterNode) -> Self {
        match node {
            FilterNode::Compare { op, key, value } => RawFilter {
                kind: op.as_str().to_string(),
                key: Some(key),
                value: Some(value),
                children: None,
            },
            FilterNode::And(children) => RawFilter::branch("AND", children),
            FilterNode::Or(children) => RawFilter::branch("OR", children),
        }
    }
}

impl RawFilter {
    fn branch(kind: &str, children: Vec<FilterNode>) -> Self {
        RawFilter {
            kind: kind.to_string(),
            key: None,
            value: None,
            children: Some(children.into_iter().map(RawFilter::from).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn doc(v: Value) -> Metadata {
        v.as_object().cloned().unwrap()
    }

    #[test]
    fn seasonal_equality() {
        let f = FilterNode::eq("month", "07");
        assert!(f.matches(&doc(json!({"month": "07"}))));
        assert!(!f.matches(&doc(json!({"month": "01"}))));
    }

    #[test]
    fn strict_greater_than_at_boundary() {
        assert!(!FilterNode::gt("reward", 5).matches(&doc(json!({"reward": 5}))));
        assert!(FilterNode::geq("reward", 5).matches(&doc(json!({"reward": 5}))));
        assert!(FilterNode::gt("reward", 5).matches(&doc(json!({"reward": 5.5}))));
    }

    #[test]
    fn nested_composition() {
        let f = FilterNode::and(vec![
            FilterNode::eq("household", "h1"),
            FilterNode::or(vec![FilterNode::eq("month", "06"), FilterNode::eq("month", "07")])
                .unwrap(),
        ])
        .unwrap();
        assert!(f.matches(&doc(json!({"household": "h1", "month": "07"}))));
        assert!(!f.matches(&doc(json!({"household": "h2", "month": "07"}))));
        assert!(!f.matches(&doc(json!({"household": "h1", "month": "08"}))));
    }

    #[test]
    fn operators_build_branches() {
        let f = FilterNode::eq("a", 1) & FilterNode::eq("b", 2) & FilterNode::eq("c", 3);
        assert!(matches!(&f, FilterNode::And(c) if c.len() == 3));
        let g = FilterNode::eq("a", 1) | FilterNode::eq("b", 2);
        assert!(g.matches(&doc(json!({"b": 2}))));
    }

    #[test]
    fn missing_keys_and_type_mismatches_are_false() {
        let d = doc(json!({"n": 3, "s": "x", "b": true}));
        for op in CompareOp::ALL {
            assert!(!FilterNode::compare(op, "absent", 1).matches(&d), "{op}");
            assert!(!FilterNode::compare(op, "n", "3").matches(&d), "{op}");
            assert!(!FilterNode::compare(op, "s", 1).matches(&d), "{op}");
        }
        assert!(FilterNode::ne("n", 4).matches(&d));
        assert!(!FilterNode::gt("b", false).matches(&d));
        assert!(FilterNode::eq("b", true).matches(&d));
        assert!(FilterNode::lt("s", "y").matches(&d));
    }

    #[test]
    fn dotted_paths_descend_objects() {
        let d = doc(json!({"stats": {"mean": 0.4, "tags": {"kind": "expert"}}}));
        assert!(FilterNode::lt("stats.mean", 0.5).matches(&d));
        assert!(FilterNode::eq("stats.tags.kind", "expert").matches(&d));
        assert!(!FilterNode::eq("stats.mean.x", 1).matches(&d));
    }

    #[test]
    fn integer_and_float_numbers_compare_numerically() {
        let d = doc(json!({"x": 2}));
        assert!(FilterNode::eq("x", 2.0).matches(&d));
        assert!(FilterNode::lt("x", 2.5).matches(&d));
    }

    #[test]
    fn empty_branches_are_structural_errors() {
        assert_eq!(FilterNode::and(vec![]), Err(FilterError::EmptyBranch("AND")));
        assert_eq!(FilterNode::or(vec![]), Err(FilterError::EmptyBranch("OR")));
        let handmade = FilterNode::And(vec![]);
        assert!(eval_filter(&handmade, &Metadata::new()).is_err());
        let non_scalar = FilterNode::Compare { op: CompareOp::Eq, key: "k".into(), value: json!([1]) };
        assert!(eval_filter(&non_scalar, &Metadata::new()).is_err());
    }

    #[test]
    fn json_encoding() {
        assert_eq!(FilterNode::eq("k", 1).to_json(), r#"{"type":"EQ","key":"k","value":1}"#);
        let tree = FilterNode::eq("a", "x") | FilterNode::leq("b", 2.5);
        assert_eq!(
            serde_json::to_value(&tree).unwrap(),
            json!({"type": "OR", "children": [
                {"type": "EQ", "key": "a", "value": "x"},
                {"type": "LEQ", "key": "b", "value": 2.5}
            ]})
        );
    }

    #[test]
    fn json_rejections() {
        assert_eq!(
            FilterNode::from_json(r#"{"type":"XOR","key":"k","value":1}"#),
            Err(FilterError::UnknownType("XOR".into()))
        );
        assert!(matches!(
            FilterNode::from_json(r#"{"type":"EQ","key":"k"}"#),
            Err(FilterError::MissingField { field: "value", .. })
        ));
        assert!(matches!(
            FilterNode::from_json(r#"{"type":"EQ","key":"k","value":1,"children":[]}"#),
            Err(FilterError::UnexpectedField { field: "children", .. })
        ));
        assert!(matches!(
            FilterNode::from_json(r#"{"type":"AND","children":[]}"#),
            Err(FilterError::EmptyBranch("AND"))
        ));
        assert!(matches!(
            FilterNode::from_json(r#"{"type":"EQ","key":"k","value":null}"#),
            Err(FilterError::NonScalarValue(_))
        ));
        assert!(matches!(
            FilterNode::from_json(r#"{"type":"EQ","key":"k","value":1,"extra":2}"#),
            Err(FilterError::Json(_))
        ));
    }

    // Independent oracle: typed scalars, explicit per-type comparison tables.
    #[derive(Debug, Clone)]
    enum Scalar {
        Int(i64),
        Str(String),
        Bool(bool),
    }

    impl Scalar {
        fn to_value(&self) -> Value {
            match self {
                Scalar::Int(i) => json!(i),
                Scalar::Str(s) => json!(s),
                Scalar::Bool(b) => json!(b),
            }
        }
    }

    #[derive(Debug, Clone)]
    enum Expr {
        Leaf(CompareOp, String, Scalar),
        All(Vec<Expr>),
        Any(Vec<Expr>),
    }

    fn oracle(e: &Expr, d: &[(String, Scalar)]) -> bool {
        match e {
            Expr::All(xs) => {
                let mut acc = true;
                for x in xs {
                    acc = acc && oracle(x, d);
                }
                acc
            }
            Expr::Any(xs) => {
                let mut acc = false;
                for x in xs {
                    acc = acc || oracle(x, d);
                }
                acc
            }
            Expr::Leaf(op, key, want) => {
                let Some((_, have)) = d.iter().find(|(k, _)| k == key) else {
                    return false;
                };
                let (lt, eq) = match (have, want) {
                    (Scalar::Int(a), Scalar::Int(b)) => (a < b, a == b),
                    (Scalar::Str(a), Scalar::Str(b)) => (a < b, a == b),
                    (Scalar::Bool(a), Scalar::Bool(b)) => {
                        return match op {
                            CompareOp::Eq => a == b,
                            CompareOp::Ne => a != b,
                            _ => false,
                        }
                    }
                    _ => return false,
                };
                match op {
                    CompareOp::Eq => eq,
                    CompareOp::Ne => !eq,
                    CompareOp::Lt => lt,
                    CompareOp::Leq => lt || eq,
                    CompareOp::Gt => !lt && !eq,
                    CompareOp::Geq => !lt,
                }
            }
        }
    }

    fn to_node(e: &Expr) -> FilterNode {
        match e {
            Expr::Leaf(op, k, v) => FilterNode::compare(*op, k.clone(), v.to_value()),
            Expr::All(xs) => FilterNode::and(xs.iter().map(to_node).collect()).unwrap(),
            Expr::Any(xs) => FilterNode::or(xs.iter().map(to_node).collect()).unwrap(),
        }
    }

    fn scalar() -> impl Strategy<Value = Scalar> {
        prop_oneof![
            (-3i64..3).prop_map(Scalar::Int),
            prop::sample::select(vec!["a", "b", "c"]).prop_map(|s| Scalar::Str(s.into())),
            any::<bool>().prop_map(Scalar::Bool),
        ]
    }

    fn key() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["k0", "k1", "k2", "k3"]).prop_map(String::from)
    }

    fn op() -> impl Strategy<Value = CompareOp> {
        prop::sample::select(CompareOp::ALL.to_vec())
    }

    fn expr() -> impl Strategy<Value = Expr> {
        let leaf = (op(), key(), scalar()).prop_map(|(o, k, v)| Expr::Leaf(o, k, v));
        // depth <= 4, at most 10 nodes
        leaf.prop_recursive(3, 10, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..=3).prop_map(Expr::All),
                prop::collection::vec(inner, 1..=3).prop_map(Expr::Any),
            ]
        })
    }

    fn document() -> impl Strategy<Value = Vec<(String, Scalar)>> {
        prop::collection::btree_map(key(), scalar(), 0..=4)
            .prop_map(|m| m.into_iter().collect())
    }

    fn to_doc(d: &[(String, Scalar)]) -> Metadata {
        d.iter().map(|(k, v)| (k.clone(), v.to_value())).collect()
    }

    proptest! {
        #[test]
        fn evaluation_agrees_with_oracle(e in expr(), d in document()) {
            let node = to_node(&e);
            prop_assert_eq!(eval_filter(&node, &to_doc(&d)).unwrap(), oracle(&e, &d));
        }

        #[test]
        fn json_round_trip(e in expr()) {
            let node = to_node(&e);
            prop_assert_eq!(FilterNode::from_json(&node.to_json()).unwrap(), node);
        }

        #[test]
        fn composition_laws(a in expr(), b in expr(), c in expr(), d in document()) {
            let (fa, fb, fc) = (to_node(&a), to_node(&b), to_node(&c));
            let doc = to_doc(&d);
            let single = FilterNode::and(vec![fa.clone()]).unwrap();
            prop_assert_eq!(single.matches(&doc), fa.matches(&doc));
            let twice = FilterNode::or(vec![fa.clone(), fa.clone()]).unwrap();
            prop_assert_eq!(twice.matches(&doc), fa.matches(&doc));
            let nested = FilterNode::and(vec![
                fa.clone(),
                FilterNode::or(vec![fb.clone(), fc.clone()]).unwrap(),
            ]).unwrap();
            prop_assert_eq!(
                nested.matches(&doc),
                fa.matches(&doc) && (fb.matches(&doc) || fc.matches(&doc))
            );
        }

        #[test]
        fn missing_key_leaf_is_absorbing_for_and_neutral_for_or(e in expr(), d in document()) {
            let node = to_node(&e);
            let doc = to_doc(&d);
            let missing = FilterNode::eq("never.present", 1);
            prop_assert!(!(node.clone() & missing.clone()).matches(&doc));
            prop_assert_eq!((node.clone() | missing).matches(&doc), node.matches(&doc));
        }
    }
}
