use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tools::{execute_tool_lossy, Args};
use super::Agent;
use crate::error::{Error, Result};
use crate::model::{AgentResponse, Coalition, ResponseSource, ToolCall, ToolCatalog};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Substring(String),
    /// Named capture groups become tool arguments.
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub required_tools: BTreeSet<String>,
    /// `{ToolName}` placeholders are replaced by that tool's result.
    pub response: String,
    /// Fixed arguments per tool, merged under the regex captures.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tool_args: BTreeMap<String, Args>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScriptFile {
    rules: Vec<ScriptRule>,
    fallback_response: String,
}

/// Deterministic rule table: the first rule that matches the prompt and
/// whose required tools are all offered produces the answer; otherwise the
/// fallback response is returned.
#[derive(Debug, Clone)]
pub struct AgentScript {
    rules: Vec<ScriptRule>,
    compiled: Vec<Option<Regex>>,
    fallback_response: String,
}

impl AgentScript {
    pub fn new(rules: Vec<ScriptRule>, fallback_response: impl Into<String>) -> Result<Self> {
        let compiled = rules
            .iter()
            .map(|r| match &r.matcher {
                Matcher::Substring(_) => Ok(None),
                Matcher::Regex(pat) => Regex::new(pat)
                    .map(Some)
                    .map_err(|e| Error::InvalidScript(e.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AgentScript {
            rules,
            compiled,
            fallback_response: fallback_response.into(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScriptFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidScript(e.to_string()))?;
        Self::new(file.rules, file.fallback_response)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    pub fn fallback_response(&self) -> &str {
        &self.fallback_response
    }

    fn digest(&self) -> String {
        let file = ScriptFile {
            rules: self.rules.clone(),
            fallback_response: self.fallback_response.clone(),
        };
        let bytes = serde_json::to_vec(&file).expect("script serializes");
        let d = Sha256::digest(&bytes);
        d[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn captures(&self, rule: usize, prompt: &str) -> Option<Args> {
        match (&self.rules[rule].matcher, &self.compiled[rule]) {
            (Matcher::Substring(s), _) => prompt.contains(s.as_str()).then(Args::new),
            (Matcher::Regex(_), Some(re)) => {
                let caps = re.captures(prompt)?;
                let mut args = Args::new();
                for name in re.capture_names().flatten() {
                    if let Some(m) = caps.name(name) {
                        args.insert(name.to_string(), m.as_str().trim().into());
                    }
                }
                Some(args)
            }
            (Matcher::Regex(_), None) => unreachable!("regex compiled at construction"),
        }
    }

    /// Runs the script against the tools in `coalition`.
    pub fn answer(
        &self,
        prompt: &str,
        coalition: &Coalition,
        catalog: &ToolCatalog,
    ) -> Result<AgentResponse> {
        let offered: BTreeSet<&str> = coalition.member_names(catalog)?.into_iter().collect();
        for (i, rule) in self.rules.iter().enumerate() {
            let Some(captures) = self.captures(i, prompt) else {
                continue;
            };
            if !rule
                .required_tools
                .iter()
                .all(|t| offered.contains(t.as_str()))
            {
                continue;
            }
            let mut text = rule.response.clone();
            let mut calls = Vec::with_capacity(rule.required_tools.len());
            for name in &rule.required_tools {
                let tool = catalog
                    .get(name)
                    .expect("offered tools come from the catalog");
                let mut args = rule.tool_args.get(name).cloned().unwrap_or_default();
                for (k, v) in &captures {
                    args.entry(k.clone()).or_insert_with(|| v.clone());
                }
                let result = execute_tool_lossy(&tool.executor_id, &args);
                text = text.replace(&format!("{{{name}}}"), &result);
                calls.push(ToolCall {
                    tool: name.clone(),
                    arguments: serde_json::Value::Object(args).to_string(),
                    result,
                });
            }
            return Ok(AgentResponse {
                text,
                tool_calls_made: calls,
                turns: 1,
                source: ResponseSource::Scripted,
            });
        }
        Ok(AgentResponse {
            text: self.fallback_response.clone(),
            tool_calls_made: vec![],
            turns: 1,
            source: ResponseSource::Scripted,
        })
    }
}

pub struct ScriptedAgent {
    script: AgentScript,
    id: String,
    calls: AtomicUsize,
}

impl ScriptedAgent {
    pub fn new(script: AgentScript) -> Self {
        let id = format!("scripted:{}", script.digest());
        ScriptedAgent {
            script,
            id,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn bundled() -> Self {
        Self::new(crate::bundled::script())
    }

    pub fn script(&self) -> &AgentScript {
        &self.script
    }
}

impl Agent for ScriptedAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(
        &self,
        prompt: &str,
        coalition: &Coalition,
        catalog: &ToolCatalog,
    ) -> Result<AgentResponse> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.script.answer(prompt, coalition, catalog)
    }

    fn request_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::similarity::tf_cosine;

    fn math_agent() -> (ScriptedAgent, ToolCatalog) {
        let cat = bundled::full_catalog()
            .select(&["Calculator", "Wiki"])
            .unwrap();
        (ScriptedAgent::bundled(), cat)
    }

    #[test]
    fn rule_matches_when_tool_offered() {
        let (agent, cat) = math_agent();
        let all = Coalition::full(&cat);
        let r = agent.respond("Calculate (5+6)*3", &all, &cat).unwrap();
        assert_eq!(r.text, "Computed result: 33");
        assert_eq!(r.turns, 1);
        assert_eq!(r.tool_calls_made.len(), 1);
        assert_eq!(r.tool_calls_made[0].tool, "Calculator");
        assert_eq!(r.tool_calls_made[0].result, "33");
    }

    #[test]
    fn fallback_without_required_tool() {
        let (agent, cat) = math_agent();
        let fallback = agent.script().fallback_response().to_string();
        let wiki = Coalition::from_names(&["Wiki"], &cat).unwrap();
        let r = agent.respond("Calculate (5+6)*3", &wiki, &cat).unwrap();
        assert_eq!(r.text, fallback);
        assert!(r.tool_calls_made.is_empty());
        let none = Coalition::empty(&cat);
        assert_eq!(
            agent.respond("Calculate (5+6)*3", &none, &cat).unwrap().text,
            fallback
        );
    }

    #[test]
    fn repeated_calls_are_identical() {
        let (agent, cat) = math_agent();
        let all = Coalition::full(&cat);
        let first = agent.respond("Compute 12*(7-2)", &all, &cat).unwrap();
        for _ in 0..1000 {
            assert_eq!(
                agent.respond("Compute 12*(7-2)", &all, &cat).unwrap().text,
                first.text
            );
        }
        assert_eq!(agent.request_count(), 1001);
    }

    #[test]
    fn substring_rules_and_fixed_args() {
        let cat = bundled::full_catalog();
        let mut tool_args = BTreeMap::new();
        let mut a = Args::new();
        a.insert("time".into(), "06:30".into());
        tool_args.insert("AddAlarm".to_string(), a);
        let rule = ScriptRule {
            matcher: Matcher::Substring("wake me".into()),
            required_tools: ["AddAlarm".to_string()].into(),
            response: "ok {AddAlarm}".into(),
            tool_args,
        };
        let agent = ScriptedAgent::new(AgentScript::new(vec![rule], "no").unwrap());
        let r = agent
            .respond("please wake me up", &Coalition::full(&cat), &cat)
            .unwrap();
        assert_eq!(r.text, "ok Alarm set for 06:30");
    }

    #[test]
    fn bad_regex_is_rejected() {
        let rule = ScriptRule {
            matcher: Matcher::Regex("(".into()),
            required_tools: BTreeSet::new(),
            response: String::new(),
            tool_args: BTreeMap::new(),
        };
        assert!(matches!(
            AgentScript::new(vec![rule], ""),
            Err(Error::InvalidScript(_))
        ));
    }

    /// For every bundled prompt, the expected tool is the only tool whose
    /// presence changes the answer, and answers share no tokens with the
    /// fallback.
    #[test]
    fn bundled_suites_have_single_decisive_tool() {
        let agent = ScriptedAgent::bundled();
        let fallback = agent.script().fallback_response();
        for (suite, cat) in [
            (bundled::consistency_suite(), bundled::core_catalog()),
            (bundled::injection_suite(), bundled::injection_catalog()),
            (bundled::cross_domain_suite(), bundled::cross_domain_catalog()),
        ] {
            for case in suite {
                let expected = cat.index_of(case.expected_tool.as_deref().unwrap()).unwrap();
                let full = agent
                    .respond(&case.prompt, &Coalition::full(&cat), &cat)
                    .unwrap();
                assert_ne!(full.text, fallback, "{}", case.id);
                assert_eq!(tf_cosine(&full.text, fallback), 0.0, "{}", case.id);
                assert!(!full.text.contains("error"), "{}: {}", case.id, full.text);
                for mask in 0..=cat.full_mask() {
                    let c = Coalition::from_mask(mask, &cat).unwrap();
                    let r = agent.respond(&case.prompt, &c, &cat).unwrap();
                    let want = if c.contains(expected) { &full.text } else { fallback };
                    assert_eq!(&r.text, want, "{} mask {mask:b}", case.id);
                    for call in &r.tool_calls_made {
                        assert!(c.member_names(&cat).unwrap().contains(&call.tool.as_str()));
                    }
                }
            }
        }
    }
}
