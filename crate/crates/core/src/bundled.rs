//! Bundled offline fixtures: the eight-tool catalog, the scripted agent's
//! rules, the executor lookup tables and the three experiment prompt suites.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::agent::AgentScript;
use crate::model::{prompt_suite_from_json, PromptCase, ToolCatalog};

pub const TOOLS_JSON: &str = include_str!("../data/tools.json");
pub const SCRIPT_JSON: &str = include_str!("../data/script.json");
pub const PRICES_JSON: &str = include_str!("../data/prices.json");
pub const WIKI_JSON: &str = include_str!("../data/wiki.json");
pub const CONSISTENCY_SUITE_JSON: &str = include_str!("../data/suites/consistency.json");
pub const INJECTION_SUITE_JSON: &str = include_str!("../data/suites/injection.json");
pub const CROSS_DOMAIN_SUITE_JSON: &str = include_str!("../data/suites/cross_domain.json");

pub const CORE_TOOLS: [&str; 3] = ["Calculator", "QueryStock", "Wiki"];
pub const DISTRACTOR_TOOLS: [&str; 4] = ["AddAlarm", "AddReminder", "PlayMusic", "BookHotel"];
pub const CROSS_DOMAIN_TOOLS: [&str; 6] = [
    "Calculator",
    "QueryStock",
    "Wiki",
    "AddAlarm",
    "PlayMusic",
    "Translate",
];

/// All eight bundled tools.
pub fn full_catalog() -> ToolCatalog {
    ToolCatalog::from_json(TOOLS_JSON).expect("bundled tools.json is valid")
}

/// Calculator, QueryStock and Wiki.
pub fn core_catalog() -> ToolCatalog {
    full_catalog().select(&CORE_TOOLS).expect("core tools bundled")
}

/// The three core tools followed by the four distractors.
pub fn injection_catalog() -> ToolCatalog {
    let names: Vec<&str> = CORE_TOOLS.iter().chain(&DISTRACTOR_TOOLS).copied().collect();
    full_catalog().select(&names).expect("injection tools bundled")
}

pub fn cross_domain_catalog() -> ToolCatalog {
    full_catalog()
        .select(&CROSS_DOMAIN_TOOLS)
        .expect("cross-domain tools bundled")
}

pub fn script() -> AgentScript {
    AgentScript::from_json(SCRIPT_JSON).expect("bundled script.json is valid")
}

pub fn consistency_suite() -> Vec<PromptCase> {
    prompt_suite_from_json(CONSISTENCY_SUITE_JSON).expect("bundled suite is valid")
}

pub fn injection_suite() -> Vec<PromptCase> {
    prompt_suite_from_json(INJECTION_SUITE_JSON).expect("bundled suite is valid")
}

pub fn cross_domain_suite() -> Vec<PromptCase> {
    prompt_suite_from_json(CROSS_DOMAIN_SUITE_JSON).expect("bundled suite is valid")
}

fn prices() -> &'static BTreeMap<String, f64> {
    static PRICES: OnceLock<BTreeMap<String, f64>> = OnceLock::new();
    PRICES.get_or_init(|| serde_json::from_str(PRICES_JSON).expect("bundled prices.json"))
}

fn articles() -> &'static BTreeMap<String, String> {
    static WIKI: OnceLock<BTreeMap<String, String>> = OnceLock::new();
    WIKI.get_or_init(|| serde_json::from_str(WIKI_JSON).expect("bundled wiki.json"))
}

pub fn stock_price(symbol: &str) -> Option<f64> {
    prices().get(symbol).copied()
}

/// Case-insensitive title lookup; a leading "the " is ignored.
pub fn wiki_article(query: &str) -> Option<&'static str> {
    let q = query.trim().trim_end_matches(['.', '?']).to_lowercase();
    let q = q.strip_prefix("the ").unwrap_or(&q);
    articles().get(q).map(String::as_str)
}
