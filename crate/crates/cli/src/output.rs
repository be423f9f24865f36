use std::io::Write;

use chrono_fmt::fmt_time;
use comfy_table::Table;
use tupli_core::auth::{RolePermissions, UserInfo};
use tupli_core::{Artifact, BenchmarkHeader, EpisodeHeader};

use crate::Failure;

mod chrono_fmt {
    pub fn fmt_time(t: &impl std::fmt::Display) -> String {
        // "2024-06-01 12:00:00.123 UTC" -> "2024-06-01 12:00:00"
        let s = t.to_string();
        let s = s.trim_end_matches(" UTC");
        s.split('.').next().unwrap_or(s).to_string()
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn print(out: &mut dyn Write, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), Failure> {
    let mut table = Table::new();
    table.load_preset(comfy_table::presets::ASCII_MARKDOWN);
    table.set_header(header.to_vec());
    for row in rows {
        table.add_row(row);
    }
    writeln!(out, "{table}").map_err(crate::io_ctx("writing output"))
}

pub(crate) fn benchmarks(out: &mut dyn Write, list: &[BenchmarkHeader]) -> Result<(), Failure> {
    let rows = list
        .iter()
        .map(|b| {
            vec![
                b.id.clone(),
                b.metadata.get("name").and_then(|v| v.as_str()).unwrap_or("").to_string(),
                b.created_by.clone(),
                yes_no(b.is_public).into(),
                fmt_time(&b.created_at),
            ]
        })
        .collect();
    print(out, &["id", "name", "created_by", "public", "created_at"], rows)
}

pub(crate) fn artifacts(out: &mut dyn Write, list: &[Artifact]) -> Result<(), Failure> {
    let rows = list
        .iter()
        .map(|a| {
            vec![
                a.id.clone(),
                a.size.to_string(),
                a.created_by.clone(),
                yes_no(a.is_public).into(),
                fmt_time(&a.created_at),
            ]
        })
        .collect();
    print(out, &["id", "size", "created_by", "public", "created_at"], rows)
}

pub(crate) fn episodes(out: &mut dyn Write, list: &[EpisodeHeader]) -> Result<(), Failure> {
    let rows = list
        .iter()
        .map(|e| {
            vec![
                e.id.clone(),
                e.benchmark_id.clone(),
                e.length.to_string(),
                e.created_by.clone(),
                yes_no(e.is_public).into(),
                fmt_time(&e.created_at),
            ]
        })
        .collect();
    print(out, &["id", "benchmark_id", "length", "created_by", "public", "created_at"], rows)
}

pub(crate) fn users(out: &mut dyn Write, list: &[UserInfo]) -> Result<(), Failure> {
    let rows = list
        .iter()
        .map(|u| {
            let roles: Vec<&str> = u.roles.iter().map(|r| r.as_str()).collect();
            vec![u.username.clone(), roles.join(","), fmt_time(&u.created_at)]
        })
        .collect();
    print(out, &["username", "roles", "created_at"], rows)
}

pub(crate) fn roles(out: &mut dyn Write, list: &[RolePermissions]) -> Result<(), Failure> {
    let scope = |s: &tupli_core::auth::Scope| {
        serde_json::to_value(s)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    };
    let rows = list
        .iter()
        .map(|r| {
            vec![
                r.role.as_str().to_string(),
                scope(&r.read),
                scope(&r.write),
                scope(&r.delete),
                scope(&r.user_management),
            ]
        })
        .collect();
    print(out, &["role", "read", "write", "delete", "user_management"], rows)
}
