use std::fmt::Write;

use super::{Constraint, QueryGraph, Value};

fn is_integer_literal(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && s.parse::<i64>().is_ok()
}

fn write_code(out: &mut String, code: &str) {
    if is_integer_literal(code) {
        out.push_str(code);
        return;
    }
    out.push('"');
    for c in code.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_constraints(out: &mut String, constraints: &[Constraint]) {
    out.push('{');
    for (i, c) in constraints.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{} {} ", c.attribute, c.op).unwrap();
        match &c.value {
            Value::Int(v) => write!(out, "{v}").unwrap(),
            Value::Code(s) => write_code(out, s),
            Value::Codes(list) => {
                out.push('[');
                for (j, s) in list.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    write_code(out, s);
                }
                out.push(']');
            }
        }
    }
    out.push('}');
}

/// Render a query as canonical DSL text: one declaration per line, nodes in
/// topological order, edges by endpoint position, then the parameters.
pub fn to_canonical(q: &QueryGraph) -> String {
    let c = q.canonicalized();
    let mut out = String::new();
    for n in &c.nodes {
        write!(out, "node {} ", n.id).unwrap();
        write_constraints(&mut out, &n.constraints);
        out.push('\n');
    }
    for e in &c.edges {
        write!(out, "edge {}: {} -> {}", e.id, e.from, e.to).unwrap();
        if !e.constraints.is_empty() {
            out.push(' ');
            write_constraints(&mut out, &e.constraints);
        }
        out.push('\n');
    }
    writeln!(out, "observe {}", c.params.observe).unwrap();
    writeln!(out, "steps {}", c.params.steps).unwrap();
    if let Some(r) = c.params.next_event_range {
        out.push_str("next_within ");
        if let Some(min) = r.min_days {
            write!(out, "{min}").unwrap();
        }
        out.push_str("..");
        if let Some(max) = r.max_days {
            write!(out, "{max}").unwrap();
        }
        out.push('\n');
    }
    out
}
