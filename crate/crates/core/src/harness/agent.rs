//! Rule-based alignment agent keyed on injection provenance.
//!
//! Stage one answers with the description of the family the page presents.
//! Stage two declares equivalence exactly when that family is the task's.
//! The agent reads only the conversation, so it also works behind a mock
//! chat endpoint.

use std::collections::BTreeMap;

use serde_json::json;

use super::synth::SynthLabels;
use super::templates::family;
use crate::debugging::{extract_payload, PagePayload, TaskPayload};
use crate::gateway::{AgentRequest, ChatAgent, GatewayError, Role};

#[derive(Debug, Clone)]
pub struct SyntheticAgent {
    /// url to content family.
    pages: BTreeMap<String, String>,
    /// task id to family.
    tasks: BTreeMap<String, String>,
}

impl SyntheticAgent {
    pub fn new(labels: &SynthLabels) -> SyntheticAgent {
        SyntheticAgent {
            pages: labels.pages.iter().map(|p| (p.url.clone(), p.content_family.clone())).collect(),
            tasks: labels.tasks.clone(),
        }
    }

    fn unknown(what: String) -> GatewayError {
        GatewayError::Transport(format!("synthetic agent has no label for {what}"))
    }
}

impl ChatAgent for SyntheticAgent {
    fn complete_raw(&self, req: &AgentRequest) -> Result<String, GatewayError> {
        let user_payloads: Vec<&str> =
            req.conversation.iter().filter(|m| m.role == Role::User).map(|m| m.content.as_str()).collect();
        let page: PagePayload = user_payloads
            .iter()
            .find_map(|m| extract_payload(m))
            .ok_or_else(|| GatewayError::Transport("conversation carries no page payload".into()))?;
        let content_family = self.pages.get(&page.url).ok_or_else(|| Self::unknown(page.url.clone()))?;
        let content = family(content_family).ok_or_else(|| Self::unknown(content_family.clone()))?;

        let task: Option<TaskPayload> = user_payloads.iter().rev().find_map(|m| extract_payload(m));
        let reply = match task {
            None => json!({ "WebPageProblem": content.description }),
            Some(task) => {
                let task_family = self.tasks.get(&task.task_id).ok_or_else(|| Self::unknown(task.task_id.clone()))?;
                if task_family == content_family {
                    json!({
                        "WebPageProblemUseConditions": "",
                        "Equivalence": true,
                        "Rationale": "The page addresses the same problem as the task.",
                    })
                } else {
                    json!({
                        "WebPageProblemUseConditions": format!("Use only for this problem: {}", content.description),
                        "Equivalence": false,
                        "Rationale": "The page solves a different problem from the one the task specifies.",
                    })
                }
            }
        };
        Ok(reply.to_string())
    }
}
