//! Episode trace CSV.
//!
//! One row per (tick, active agent):
//!
//! ```text
//! episode,step,agent,action_kind,global_process,observation,reward,
//! belief_0..belief_{M-1},message_kind,message_payload[,value_estimate,logprob]
//! ```
//!
//! `belief_*` is the agent's belief after the tick, `message_*` the message it
//! broadcasts for the next tick, and `reward` includes the terminal share on
//! the agent's final row. Empty cells stand for "not applicable".

use std::io::{Read, Write};

use crate::env::episode::{ActionKind, EpisodeOutcome, EpisodeState, MessageContent, StepOutcome};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub episode: u64,
    pub step: u32,
    pub agent: usize,
    pub action_kind: ActionKind,
    pub global_process: Option<usize>,
    pub observation: Option<f64>,
    pub reward: f64,
    pub beliefs: Vec<f64>,
    pub message: MessageContent,
    pub value_estimate: Option<f64>,
    pub logprob: Option<f64>,
}

/// Collects the rows of one episode while it runs.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    rows: Vec<TraceRow>,
}

impl TraceRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the rows of the tick that produced `step`; `state` is the state
    /// after that tick. `extras[k]` carries `(value_estimate, logprob)` when
    /// the acting policy provides them.
    pub fn record(&mut self, episode: u64, step: &StepOutcome, state: &EpisodeState, extras: Option<&[(f64, f64)]>) {
        for s in step.agents.iter().flatten() {
            let extra = extras.map(|e| e[s.agent]);
            self.rows.push(TraceRow {
                episode,
                step: step.tick,
                agent: s.agent,
                action_kind: s.kind,
                global_process: s.process,
                observation: s.observation,
                reward: s.reward,
                beliefs: state.belief(s.agent).probs().to_vec(),
                message: state.messages()[s.agent].content,
                value_estimate: extra.map(|e| e.0),
                logprob: extra.map(|e| e.1),
            });
        }
    }

    /// Settle terminal shares onto each agent's last row and hand the rows out.
    pub fn finish(mut self, outcome: &EpisodeOutcome) -> Vec<TraceRow> {
        for (k, share) in outcome.terminal_rewards.iter().enumerate() {
            if let Some(row) = self.rows.iter_mut().rev().find(|r| r.agent == k) {
                row.reward += share;
            }
        }
        self.rows
    }
}

fn header(num_processes: usize, learning_columns: bool) -> Vec<String> {
    let mut h: Vec<String> = ["episode", "step", "agent", "action_kind", "global_process", "observation", "reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..num_processes).map(|j| format!("belief_{j}")));
    h.push("message_kind".into());
    h.push("message_payload".into());
    if learning_columns {
        h.push("value_estimate".into());
        h.push("logprob".into());
    }
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    num_processes: usize,
    learning_columns: bool,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(writer: W, num_processes: usize, learning_columns: bool) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(header(num_processes, learning_columns))?;
        Ok(Self {
            inner,
            num_processes,
            learning_columns,
        })
    }

    pub fn write(&mut self, row: &TraceRow) -> Result<()> {
        if row.beliefs.len() != self.num_processes {
            return Err(Error::contract("trace row belief width differs from header"));
        }
        let (kind, payload) = match row.message {
            MessageContent::Null => ("null", None),
            MessageContent::LastAction(p) => ("last_action", Some(p)),
            MessageContent::Declared(d) => ("declared", Some(d)),
        };
        let mut rec = vec![
            row.episode.to_string(),
            row.step.to_string(),
            row.agent.to_string(),
            row.action_kind.as_str().to_string(),
            opt(row.global_process),
            opt(row.observation),
            row.reward.to_string(),
        ];
        rec.extend(row.beliefs.iter().map(|b| b.to_string()));
        rec.push(kind.into());
        rec.push(opt(payload));
        if self.learning_columns {
            rec.push(opt(row.value_estimate));
            rec.push(opt(row.logprob));
        }
        self.inner.write_record(rec)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Parse a trace. Returns the number of belief columns and the rows.
pub fn read_trace<R: Read>(reader: R) -> Result<(usize, Vec<TraceRow>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::Trace { line: 1, reason: format!("missing column `{name}`") });
    let episode_c = need("episode")?;
    let step_c = need("step")?;
    let agent_c = need("agent")?;
    let kind_c = need("action_kind")?;
    let process_c = need("global_process")?;
    let obs_c = need("observation")?;
    let reward_c = need("reward")?;
    let mkind_c = need("message_kind")?;
    let mpay_c = need("message_payload")?;
    let value_c = col("value_estimate");
    let logp_c = col("logprob");
    let mut belief_cols = Vec::new();
    while let Some(c) = col(&format!("belief_{}", belief_cols.len())) {
        belief_cols.push(c);
    }
    if belief_cols.is_empty() {
        return Err(Error::Trace { line: 1, reason: "no belief_* columns".into() });
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Trace { line, reason: e.to_string() })?;
        let bad = |what: &str| Error::Trace { line, reason: format!("bad {what}") };
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let parse_opt_f = |c: Option<usize>, what: &str| -> Result<Option<f64>> {
            match c.map(field) {
                None | Some("") => Ok(None),
                Some(s) => s.parse().map(Some).map_err(|_| bad(what)),
            }
        };
        let action_kind = match field(kind_c) {
            "sample" => ActionKind::Sample,
            "stop" => ActionKind::Stop,
            "forced_stop" => ActionKind::ForcedStop,
            _ => return Err(bad("action_kind")),
        };
        let global_process = match field(process_c) {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("global_process"))?),
        };
        let payload = match field(mpay_c) {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|_| bad("message_payload"))?),
        };
        let message = match (field(mkind_c), payload) {
            ("null", None) => MessageContent::Null,
            ("last_action", Some(p)) => MessageContent::LastAction(p),
            ("declared", Some(d)) => MessageContent::Declared(d),
            _ => return Err(bad("message")),
        };
        let beliefs = belief_cols
            .iter()
            .map(|&c| field(c).parse::<f64>().map_err(|_| bad("belief")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(TraceRow {
            episode: field(episode_c).parse().map_err(|_| bad("episode"))?,
            step: field(step_c).parse().map_err(|_| bad("step"))?,
            agent: field(agent_c).parse().map_err(|_| bad("agent"))?,
            action_kind,
            global_process,
            observation: parse_opt_f(Some(obs_c), "observation")?,
            reward: field(reward_c).parse().map_err(|_| bad("reward"))?,
            beliefs,
            message,
            value_estimate: parse_opt_f(value_c, "value_estimate")?,
            logprob: parse_opt_f(logp_c, "logprob")?,
        });
    }
    Ok((belief_cols.len(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::config::EnvConfig;
    use crate::env::episode::AgentAction;

    #[test]
    fn round_trips_through_csv() {
        let cfg = EnvConfig::independent(3, 2, 0.1).unwrap();
        let mut ep = EpisodeState::with_hypothesis(&cfg, 8, 1).unwrap();
        let mut rec = TraceRecorder::new();
        let s = ep.step(&cfg, &[Some(AgentAction::Sample(1)), Some(AgentAction::Sample(2))]).unwrap();
        rec.record(0, &s, &ep, None);
        let s = ep.step(&cfg, &[Some(AgentAction::Stop), Some(AgentAction::Declare(1))]).unwrap();
        rec.record(0, &s, &ep, None);
        let rows = rec.finish(s.outcome.as_ref().unwrap());
        assert_eq!(rows.len(), 4);

        let mut buf = Vec::new();
        {
            let mut w = TraceWriter::new(&mut buf, 3, false).unwrap();
            for r in &rows {
                w.write(r).unwrap();
            }
            w.flush().unwrap();
        }
        let (m, parsed) = read_trace(buf.as_slice()).unwrap();
        assert_eq!(m, 3);
        assert_eq!(parsed, rows);
    }

    #[test]
    fn reports_line_of_malformed_row() {
        let text = "episode,step,agent,action_kind,global_process,observation,reward,belief_0,belief_1,message_kind,message_payload\n\
                    0,1,0,sample,1,0.5,-0.1,0.4,0.6,last_action,1\n\
                    0,2,0,jump,,,-0.1,0.4,0.6,null,\n";
        match read_trace(text.as_bytes()) {
            Err(Error::Trace { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
