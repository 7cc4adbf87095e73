use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
    /// Diagnostic value that is reported but never judged.
    Info,
}

/// One checked identity. `residual` is an absolute norm; the entry passes
/// when `residual <= tolerance * max(1, scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub name: String,
    pub residual: f64,
    pub scale: f64,
    pub tolerance: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RelationEntry {
    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub tolerance: f64,
    pub entries: Vec<RelationEntry>,
}

impl RelationReport {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            entries: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, residual: f64, scale: f64) -> &mut RelationEntry {
        self.check_at(name, residual, scale, None)
    }

    pub fn check_at(
        &mut self,
        name: &str,
        residual: f64,
        scale: f64,
        worst_index: Option<usize>,
    ) -> &mut RelationEntry {
        let tolerance = self.tolerance;
        let ok = residual.is_finite() && residual <= tolerance * scale.max(1.0);
        self.entries.push(RelationEntry {
            name: name.to_string(),
            residual,
            scale,
            tolerance,
            status: if ok { Status::Pass } else { Status::Fail },
            worst_index,
            note: None,
        });
        self.entries.last_mut().expect("just pushed")
    }

    pub fn not_applicable(&mut self, name: &str, why: &str) {
        self.entries.push(RelationEntry {
            name: name.to_string(),
            residual: 0.0,
            scale: 0.0,
            tolerance: self.tolerance,
            status: Status::NotApplicable,
            worst_index: None,
            note: Some(why.to_string()),
        });
    }

    pub fn info(&mut self, name: &str, value: f64, note: &str) {
        self.entries.push(RelationEntry {
            name: name.to_string(),
            residual: value,
            scale: 0.0,
            tolerance: self.tolerance,
            status: Status::Info,
            worst_index: None,
            note: Some(note.to_string()),
        });
    }

    pub fn fail(&mut self, name: &str, why: String) {
        self.entries.push(RelationEntry {
            name: name.to_string(),
            residual: f64::INFINITY,
            scale: 0.0,
            tolerance: self.tolerance,
            status: Status::Fail,
            worst_index: None,
            note: Some(why),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(RelationEntry::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RelationEntry> {
        self.entries.iter().filter(|e| e.status == Status::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&RelationEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Largest residual among applicable entries.
    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, Status::Pass | Status::Fail))
            .map(|e| e.residual)
            .fold(0.0, f64::max)
    }

    pub fn extend(&mut self, other: RelationReport) {
        self.entries.extend(other.entries);
    }
}

/// `(index, value)` of the largest value, `None` for an empty iterator.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    values
        .into_iter()
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
}
