use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::domain::{ConfigId, ConversationLog, Outcome, TaskState, TurnRecord};

/// One line of a conversation log file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header {
        test_case_id: String,
        persona_id: String,
        config_id: ConfigId,
    },
    Turn(TurnRecord),
    Footer {
        outcome: Outcome,
        final_state: TaskState,
        #[serde(default)]
        notes: Vec<String>,
    },
}

pub fn log_path(out: &Path, log: &ConversationLog) -> PathBuf {
    out.join(log.config_id.dir_name())
        .join(format!("{}.jsonl", log.test_case_id))
}

pub fn to_jsonl(log: &ConversationLog) -> String {
    let mut lines = vec![LogLine::Header {
        test_case_id: log.test_case_id.clone(),
        persona_id: log.persona_id.clone(),
        config_id: log.config_id,
    }];
    lines.extend(log.turns.iter().cloned().map(LogLine::Turn));
    lines.push(LogLine::Footer {
        outcome: log.outcome,
        final_state: log.final_state.clone(),
        notes: log.notes.clone(),
    });
    let mut out = String::new();
    for l in &lines {
        out.push_str(&serde_json::to_string(l).expect("log lines serialize"));
        out.push('\n');
    }
    out
}

/// Writes `<out>/<config>/<testcase>.jsonl` and returns its path.
pub fn write_log(out: &Path, log: &ConversationLog) -> Result<PathBuf, HarnessError> {
    let path = log_path(out, log);
    let io = |source| HarnessError::Io {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(path.parent().expect("log path has a parent")).map_err(io)?;
    let mut w = BufWriter::new(fs::File::create(&path).map_err(io)?);
    w.write_all(to_jsonl(log).as_bytes()).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(path)
}

pub fn parse_jsonl(text: &str, file: &Path) -> Result<ConversationLog, HarnessError> {
    let err = |line: usize, message: String| HarnessError::Log {
        file: file.to_owned(),
        line,
        message,
    };
    let mut header = None;
    let mut turns = Vec::new();
    let mut footer = None;
    for (i, raw) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let n = i + 1;
        if footer.is_some() {
            return Err(err(n, "content after footer".into()));
        }
        let de = &mut serde_json::Deserializer::from_str(raw);
        let line: LogLine = serde_path_to_error::deserialize(de)
            .map_err(|e| err(n, format!("field `{}`: {}", e.path(), e.inner())))?;
        match line {
            LogLine::Header { .. } if header.is_some() || !turns.is_empty() => {
                return Err(err(n, "header must be the first line".into()))
            }
            LogLine::Header {
                test_case_id,
                persona_id,
                config_id,
            } => header = Some((test_case_id, persona_id, config_id)),
            _ if header.is_none() => return Err(err(n, "missing header line".into())),
            LogLine::Turn(t) => turns.push(t),
            LogLine::Footer {
                outcome,
                final_state,
                notes,
            } => footer = Some((outcome, final_state, notes)),
        }
    }
    let (test_case_id, persona_id, config_id) = header.ok_or_else(|| err(0, "empty log".into()))?;
    let (outcome, final_state, notes) =
        footer.ok_or_else(|| err(0, "missing footer line".into()))?;
    Ok(ConversationLog {
        test_case_id,
        persona_id,
        config_id,
        turns,
        final_state,
        outcome,
        notes,
    })
}

pub fn read_log(path: &Path) -> Result<ConversationLog, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_jsonl(&text, path)
}

/// All `.jsonl` logs in `dir` and its immediate subdirectories, ordered by
/// configuration and test case.
pub fn read_logs(dir: &Path) -> Result<Vec<ConversationLog>, HarnessError> {
    let mut files = Vec::new();
    collect(dir, 1, &mut files)?;
    files.sort();
    let mut logs = files
        .iter()
        .map(|f| read_log(f))
        .collect::<Result<Vec<_>, _>>()?;
    logs.sort_by(|a, b| (a.config_id, &a.test_case_id).cmp(&(b.config_id, &b.test_case_id)));
    Ok(logs)
}

fn collect(dir: &Path, depth: u32, files: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = fs::read_dir(dir).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => HarnessError::MissingFile(dir.to_owned()),
        _ => HarnessError::Io {
            path: dir.to_owned(),
            source,
        },
    })?;
    for entry in entries {
        let path = entry
            .map_err(|source| HarnessError::Io {
                path: dir.to_owned(),
                source,
            })?
            .path();
        if path.is_dir() && depth > 0 {
            collect(&path, depth - 1, files)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            files.push(path);
        }
    }
    Ok(())
}
