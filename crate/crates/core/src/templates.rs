//! Versioned prompt templates bundled at compile time.
//!
//! Each file is split into `@@ role`, `@@ demo` (repeatable) and
//! `@@ directive` sections.

use std::sync::OnceLock;

use crate::model::PatternKind;

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Template {
    pub role: String,
    pub demos: Vec<String>,
    pub directive: String,
}

impl Template {
    pub fn parse(text: &str) -> Template {
        let mut t = Template::default();
        let mut section: Option<&str> = None;
        let mut buf = String::new();
        let flush = |t: &mut Template, section: Option<&str>, buf: &mut String| {
            let body = buf.trim().to_string();
            buf.clear();
            match section {
                Some("role") => t.role = body,
                Some("demo") => t.demos.push(body),
                Some("directive") => t.directive = body,
                _ => {}
            }
        };
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("@@ ") {
                flush(&mut t, section, &mut buf);
                section = Some(match name.trim() {
                    "role" => "role",
                    "demo" => "demo",
                    "directive" => "directive",
                    _ => "unknown",
                });
            } else {
                buf.push_str(line);
                buf.push('\n');
            }
        }
        flush(&mut t, section, &mut buf);
        t
    }
}

macro_rules! bundled {
    ($fn_name:ident, $file:literal) => {
        pub fn $fn_name() -> &'static Template {
            static T: OnceLock<Template> = OnceLock::new();
            T.get_or_init(|| Template::parse(include_str!(concat!("../templates/v1/", $file))))
        }
    };
}

bundled!(vanilla_query, "query_vanilla.txt");
bundled!(multi_hops, "qr_multi_hops.txt");
bundled!(comparison, "qr_comparison.txt");
bundled!(set_operation, "qr_set_operation.txt");
bundled!(evidence_chain, "evidence_chain.txt");
bundled!(fallacy_finder, "judge_fallacy_finder.txt");
bundled!(claim_check, "claim_check.txt");
bundled!(verdict_manager, "verdict_manager.txt");

pub fn generation(pattern: PatternKind) -> &'static Template {
    match pattern {
        PatternKind::Vanilla => vanilla_query(),
        PatternKind::MultiHops => multi_hops(),
        PatternKind::Comparison => comparison(),
        PatternKind::SetOperation => set_operation(),
    }
}
