use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ElicitationError, PreferenceRecord, RankedList, Result, ScopeChoice, TeamSession};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPreference {
    pub version: u32,
    pub recorded_at: DateTime<Utc>,
    pub record: PreferenceRecord,
}

/// All submissions of one participant, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantHistory {
    pub participant_id: String,
    pub versions: Vec<StoredPreference>,
}

/// Preference records with their version history, and team sessions.
/// Participants keep the order in which they were first recorded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElicitationStore {
    pub preferences: Vec<ParticipantHistory>,
    pub teams: BTreeMap<String, TeamSession>,
}

impl ElicitationStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a record, keeping earlier submissions by the same participant
    /// as older versions.
    pub fn record_preference(&mut self, record: PreferenceRecord) -> Result<StoredPreference> {
        self.record_preference_at(record, Utc::now())
    }

    pub fn record_preference_at(
        &mut self,
        record: PreferenceRecord,
        at: DateTime<Utc>,
    ) -> Result<StoredPreference> {
        record.validate()?;
        let idx = match self
            .preferences
            .iter()
            .position(|h| h.participant_id == record.participant_id)
        {
            Some(i) => i,
            None => {
                self.preferences.push(ParticipantHistory {
                    participant_id: record.participant_id.clone(),
                    versions: Vec::new(),
                });
                self.preferences.len() - 1
            }
        };
        let history = &mut self.preferences[idx].versions;
        let stored = StoredPreference {
            version: history.len() as u32 + 1,
            recorded_at: at,
            record,
        };
        history.push(stored.clone());
        Ok(stored)
    }

    pub fn preference(&self, participant_id: &str) -> Option<&StoredPreference> {
        self.history(participant_id).and_then(|h| h.last())
    }

    pub fn history(&self, participant_id: &str) -> Option<&[StoredPreference]> {
        self.preferences
            .iter()
            .find(|h| h.participant_id == participant_id)
            .map(|h| h.versions.as_slice())
    }

    /// Latest record of every participant.
    pub fn records(&self) -> Vec<PreferenceRecord> {
        self.preferences
            .iter()
            .filter_map(|h| h.versions.last())
            .map(|s| s.record.clone())
            .collect()
    }

    pub fn participant_count(&self) -> usize {
        self.preferences.len()
    }

    /// Stores a team session. Members must have recorded preferences, and a
    /// finalized session cannot be replaced.
    pub fn record_consensus(&mut self, session: TeamSession) -> Result<&TeamSession> {
        session.validate()?;
        if let Some(unknown) = session
            .member_ids
            .iter()
            .find(|m| self.preference(m).is_none())
        {
            return Err(ElicitationError::UnknownParticipant(unknown.clone()));
        }
        if self.teams.get(&session.team_id).is_some_and(|t| t.finalized) {
            return Err(ElicitationError::Finalized(session.team_id));
        }
        let id = session.team_id.clone();
        self.teams.insert(id.clone(), session);
        Ok(&self.teams[&id])
    }

    pub fn team(&self, team_id: &str) -> Option<&TeamSession> {
        self.teams.get(team_id)
    }

    pub fn teams(&self) -> impl Iterator<Item = &TeamSession> {
        self.teams.values()
    }
}

fn join(set: &std::collections::BTreeSet<crate::metrics::MetricId>) -> String {
    set.iter().map(|m| m.code()).collect::<Vec<_>>().join("|")
}

fn scope_name(s: ScopeChoice) -> &'static str {
    match s {
        ScopeChoice::Group => "group",
        ScopeChoice::Subgroup => "subgroup",
        ScopeChoice::ContextDependent => "context_dependent",
    }
}

/// One row per participant: the three ranks (tied metrics joined by `|`),
/// scope choice, the three thresholds and the features of concern.
pub fn to_csv(records: &[PreferenceRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "participant_id",
        "top1",
        "top2",
        "top3",
        "scope",
        "group_threshold",
        "subgroup_threshold",
        "individual_threshold",
        "feature_concern",
    ])
    .expect("in-memory write");
    for r in records {
        let RankedList { top1, top2, top3 } = &r.ranking;
        w.write_record([
            r.participant_id.clone(),
            join(top1),
            join(top2),
            join(top3),
            scope_name(r.scope_choice).to_string(),
            r.thresholds.group.to_string(),
            r.thresholds.subgroup.to_string(),
            r.thresholds.individual.to_string(),
            r.feature_concern.iter().cloned().collect::<Vec<_>>().join("|"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
