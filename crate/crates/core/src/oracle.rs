//! Brute-force joint distribution of a rule model.
//!
//! Enumerates every truth assignment of the evidence bits and the target,
//! multiplies the potentials `psi` (rule satisfied) or `1 - psi` (rule
//! falsified) and normalizes. Exponential in the number of variables; it exists
//! to check the closed-form conditional in [`crate::model`].

use crate::error::{Error, Result};
use crate::model::Rule;

/// Largest supported variable count (evidence bits plus the target).
pub const MAX_VARIABLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    /// Evidence bits plus one target bit.
    pub variable_count: usize,
    /// Indexed by assignment: bit `i` holds variable `i`; the target is the
    /// highest bit.
    pub probabilities: Vec<f64>,
    /// Sum of unnormalized potential products.
    pub z_norm: f64,
}

impl JointDistribution {
    fn target_bit(&self) -> usize {
        1 << (self.variable_count - 1)
    }

    /// `P(y = 1 | e)` by conditioning the table on the evidence bits.
    pub fn conditional_target(&self, evidence: &[bool]) -> Result<f64> {
        if evidence.len() + 1 != self.variable_count {
            return Err(Error::Structure(format!(
                "expected {} evidence bits, got {}",
                self.variable_count - 1,
                evidence.len()
            )));
        }
        let base: usize = evidence
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| 1 << i)
            .sum();
        let p1 = self.probabilities[base | self.target_bit()];
        let p0 = self.probabilities[base];
        Ok(p1 / (p0 + p1))
    }

    /// Marginal `P(y = 1)`.
    pub fn target_marginal(&self) -> f64 {
        let bit = self.target_bit();
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(j, _)| j & bit != 0)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Joint distribution over `evidence_count` evidence bits and the target.
/// Every rule concludes the target; an empty premise is the intercept.
pub fn brute_force_joint(rules: &[Rule], evidence_count: usize) -> Result<JointDistribution> {
    let n = evidence_count + 1;
    if n > MAX_VARIABLES {
        return Err(Error::Size(format!(
            "joint enumeration supports at most {MAX_VARIABLES} variables, got {n}"
        )));
    }
    for rule in rules {
        let w = rule.weight();
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Domain(format!("rule {} weight {w} outside (0, 1)", rule.id)));
        }
        if let Some(lit) = rule.premise.iter().find(|l| l.feature >= evidence_count) {
            return Err(Error::Structure(format!(
                "rule {} references evidence bit {} of {evidence_count}",
                rule.id, lit.feature
            )));
        }
    }

    let target = 1usize << evidence_count;
    let mut table = Vec::with_capacity(1 << n);
    for assignment in 0..(1usize << n) {
        let y = assignment & target != 0;
        let potential: f64 = rules
            .iter()
            .map(|rule| {
                let premise = rule
                    .premise
                    .iter()
                    .all(|lit| (assignment >> lit.feature) & 1 == lit.expected as usize);
                // premise => y is satisfied unless the premise holds and y is false
                if !premise || y {
                    rule.weight()
                } else {
                    1.0 - rule.weight()
                }
            })
            .product();
        table.push(potential);
    }
    let z_norm: f64 = table.iter().sum();
    for p in &mut table {
        *p /= z_norm;
    }
    Ok(JointDistribution {
        variable_count: n,
        probabilities: table,
        z_norm,
    })
}
