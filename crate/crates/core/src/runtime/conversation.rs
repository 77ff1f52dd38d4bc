//! Turn-taking between agents under a mediator policy.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{RunCtx, RuntimeError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    /// Grid position used by radius-limited audiences.
    pub position: Option<(f64, f64)>,
}

impl Participant {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            position: None,
        }
    }

    pub fn at(id: impl Into<String>, position: (f64, f64)) -> Self {
        Self {
            id: id.into(),
            position: Some(position),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    /// Each participant independently speaks once with this probability.
    Probability(f64),
    /// Participants take turns in order, each speaking at most this many times.
    Quota(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakOrder {
    Random,
    RoundRobin { start: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Audience {
    Everyone,
    /// Euclidean distance at most this value.
    WithinRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversationPolicy {
    pub eligibility: Eligibility,
    pub order: SpeakOrder,
    pub audience: Audience,
    /// Deliver an utterance only to participants after the speaker in the
    /// speaking order.
    pub deliver_only_to_later: bool,
    pub max_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub turn: usize,
    pub speaker: String,
    pub text: String,
    pub audience: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    /// Speaking order for the round, as participant ids.
    pub order: Vec<String>,
    pub utterances: Vec<Utterance>,
}

impl Transcript {
    /// Utterances delivered to `id`, in speaking order.
    pub fn heard_by<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Utterance> + 'a {
        self.utterances
            .iter()
            .filter(move |u| u.audience.iter().any(|a| a == id))
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

fn audience(participants: &[Participant], order: &[usize], pos: usize, policy: &ConversationPolicy) -> Vec<String> {
    let speaker = &participants[order[pos]];
    let candidates: Vec<usize> = if policy.deliver_only_to_later {
        order[pos + 1..].to_vec()
    } else {
        order.iter().copied().filter(|&i| i != order[pos]).collect()
    };
    candidates
        .into_iter()
        .map(|i| &participants[i])
        .filter(|p| match policy.audience {
            Audience::Everyone => true,
            Audience::WithinRadius(r) => match (speaker.position, p.position) {
                (Some(a), Some(b)) => ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() <= r + 1e-9,
                _ => false,
            },
        })
        .map(|p| p.id.clone())
        .collect()
}

/// Runs one conversation among `participants`.
///
/// `speak` is called for each turn with the transcript so far and returns
/// the utterance, or `None` when the participant stays silent. Under a quota
/// policy a silent participant drops out for the rest of the conversation.
pub fn mediate_conversation<F>(
    ctx: &mut RunCtx,
    participants: &[Participant],
    policy: &ConversationPolicy,
    mut speak: F,
) -> Result<Transcript, RuntimeError>
where
    F: FnMut(&mut RunCtx, &Participant, &Transcript) -> Result<Option<String>, RuntimeError>,
{
    let n = participants.len();
    let mut transcript = Transcript::default();
    if n == 0 {
        return Ok(transcript);
    }
    let order: Vec<usize> = match policy.order {
        SpeakOrder::Random => ctx.permutation("conversation.order", n)?,
        SpeakOrder::RoundRobin { start } => (0..n).map(|k| (start + k) % n).collect(),
    };
    transcript.order = order.iter().map(|&i| participants[i].id.clone()).collect();

    let mut say = |ctx: &mut RunCtx, pos: usize, transcript: &mut Transcript| -> Result<bool, RuntimeError> {
        let who = &participants[order[pos]];
        let Some(text) = speak(ctx, who, transcript)? else {
            return Ok(false);
        };
        let utterance = Utterance {
            turn: transcript.utterances.len(),
            speaker: who.id.clone(),
            text,
            audience: audience(participants, &order, pos, policy),
        };
        ctx.world(
            Some(&who.id),
            json!({"utterance": {"turn": utterance.turn, "text": utterance.text, "audience": utterance.audience}}),
        )?;
        transcript.utterances.push(utterance);
        Ok(true)
    };

    match policy.eligibility {
        Eligibility::Probability(p) => {
            let mut speakers = Vec::new();
            for pos in 0..n {
                if ctx.uniform("conversation.speak")? < p {
                    speakers.push(pos);
                }
            }
            for pos in speakers {
                if transcript.utterances.len() >= policy.max_turns {
                    break;
                }
                say(ctx, pos, &mut transcript)?;
            }
        }
        Eligibility::Quota(quota) => {
            let mut left = vec![quota; n];
            let mut active = vec![true; n];
            'turns: loop {
                let mut progressed = false;
                for pos in 0..n {
                    if transcript.utterances.len() >= policy.max_turns {
                        break 'turns;
                    }
                    if !active[pos] || left[pos] == 0 {
                        continue;
                    }
                    progressed = true;
                    if say(ctx, pos, &mut transcript)? {
                        left[pos] -= 1;
                    } else {
                        active[pos] = false;
                    }
                }
                if !progressed {
                    break;
                }
            }
        }
    }
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::promptkit::{ActiveVariants, PromptRegistry};
    use crate::provider::{OracleRegistry, ScriptedProvider};
    use crate::runtime::{Journal, SimRng};

    fn ctx() -> RunCtx {
        RunCtx::new(
            "t",
            Journal::in_memory("t"),
            SimRng::new(5),
            Arc::new(ScriptedProvider::new(OracleRegistry::new())),
            Arc::new(PromptRegistry::empty()),
            ActiveVariants::none(),
        )
    }

    #[test]
    fn alternating_quota_caps_turns() {
        let mut c = ctx();
        let firms = [Participant::new("firm1"), Participant::new("firm2")];
        let policy = ConversationPolicy {
            eligibility: Eligibility::Quota(3),
            order: SpeakOrder::RoundRobin { start: 0 },
            audience: Audience::Everyone,
            deliver_only_to_later: false,
            max_turns: 6,
        };
        let t = mediate_conversation(&mut c, &firms, &policy, |_, p, _| Ok(Some(format!("hi from {}", p.id)))).unwrap();
        assert_eq!(t.utterances.len(), 6);
        let speakers: Vec<_> = t.utterances.iter().map(|u| u.speaker.as_str()).collect();
        assert_eq!(speakers, ["firm1", "firm2", "firm1", "firm2", "firm1", "firm2"]);
        assert_eq!(t.utterances[0].audience, ["firm2"]);
    }

    #[test]
    fn silent_participant_drops_out() {
        let mut c = ctx();
        let firms = [Participant::new("a"), Participant::new("b")];
        let policy = ConversationPolicy {
            eligibility: Eligibility::Quota(3),
            order: SpeakOrder::RoundRobin { start: 1 },
            audience: Audience::Everyone,
            deliver_only_to_later: false,
            max_turns: 6,
        };
        let t = mediate_conversation(&mut c, &firms, &policy, |_, p, _| Ok((p.id == "b").then(|| "x".into()))).unwrap();
        assert_eq!(t.utterances.len(), 3);
        assert_eq!(t.order, ["b", "a"]);
    }

    #[test]
    fn zero_probability_is_silent() {
        let mut c = ctx();
        let ps: Vec<_> = (0..5)
            .map(|i| Participant::at(i.to_string(), (i as f64, 0.0)))
            .collect();
        let policy = ConversationPolicy {
            eligibility: Eligibility::Probability(0.0),
            order: SpeakOrder::Random,
            audience: Audience::WithinRadius(5.0),
            deliver_only_to_later: true,
            max_turns: usize::MAX,
        };
        let mut calls = 0;
        let t = mediate_conversation(&mut c, &ps, &policy, |_, _, _| {
            calls += 1;
            Ok(Some("x".into()))
        })
        .unwrap();
        assert!(t.is_empty());
        assert_eq!(calls, 0);
    }

    #[test]
    fn radius_and_later_only() {
        let mut c = ctx();
        let ps = [
            Participant::at("s", (10.0, 10.0)),
            Participant::at("near", (10.0, 15.0)),
            Participant::at("far", (10.0, 16.0)),
        ];
        let policy = ConversationPolicy {
            eligibility: Eligibility::Probability(1.0),
            order: SpeakOrder::RoundRobin { start: 0 },
            audience: Audience::WithinRadius(5.0),
            deliver_only_to_later: true,
            max_turns: usize::MAX,
        };
        let t = mediate_conversation(&mut c, &ps, &policy, |_, p, _| {
            Ok((p.id == "s").then(|| "go left".into()))
        })
        .unwrap();
        assert_eq!(t.utterances[0].audience, ["near"]);
        assert_eq!(t.heard_by("near").count(), 1);
        assert_eq!(t.heard_by("far").count(), 0);
    }
}
