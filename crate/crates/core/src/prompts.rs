//! System prompts shipped as text assets. Any of them can be replaced by a
//! file of the same name in an override directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub manager: String,
    pub standard_reasoner: String,
    pub critical_reviewer: String,
    pub code_reasoner: String,
    pub knowledge_searcher: String,
    pub final_answer: String,
    /// Termination instruction `c_end` appended to the synthesis request.
    pub termination: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            manager: include_str!("../assets/prompts/manager.txt").to_string(),
            standard_reasoner: include_str!("../assets/prompts/standard_reasoner.txt").to_string(),
            critical_reviewer: include_str!("../assets/prompts/critical_reviewer.txt").to_string(),
            code_reasoner: include_str!("../assets/prompts/code_reasoner.txt").to_string(),
            knowledge_searcher: include_str!("../assets/prompts/knowledge_searcher.txt")
                .to_string(),
            final_answer: include_str!("../assets/prompts/final_answer.txt").to_string(),
            termination: include_str!("../assets/prompts/termination.txt")
                .trim_end()
                .to_string(),
        }
    }
}

impl PromptSet {
    /// Defaults, with `<name>.txt` files from `dir` taking precedence.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::default();
        let slots: [(&str, &mut String); 7] = [
            ("manager", &mut set.manager),
            ("standard_reasoner", &mut set.standard_reasoner),
            ("critical_reviewer", &mut set.critical_reviewer),
            ("code_reasoner", &mut set.code_reasoner),
            ("knowledge_searcher", &mut set.knowledge_searcher),
            ("final_answer", &mut set.final_answer),
            ("termination", &mut set.termination),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(set)
    }

    /// Manager prompt with the parallelism bound filled in.
    pub fn manager_prompt(&self, max_parallel: usize) -> String {
        self.manager
            .replace("{max_parallel}", &max_parallel.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_prompts_carry_their_tags() {
        let p = PromptSet::default();
        assert!(p.manager.contains("<tool_call>"));
        assert!(p.critical_reviewer.contains("<conversation_history>"));
        assert!(p.final_answer.contains("<conversation_history>"));
        assert!(p.code_reasoner.contains("<code>"));
        assert!(p.knowledge_searcher.contains("<query>"));
        assert!(p.standard_reasoner.contains("\\boxed{final answer}"));
        assert!(p.manager_prompt(4).contains("at most 4 calls"));
    }

    #[test]
    fn directory_overrides_single_prompt() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("termination.txt"), "stop now").unwrap();
        let p = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(p.termination, "stop now");
        assert_eq!(p.manager, PromptSet::default().manager);
    }
}
