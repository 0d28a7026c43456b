//! Tabular policies over a finite prompt/completion space.
//!
//! A policy is a logit matrix indexed `[prompt][completion]`; probabilities
//! are exact softmaxes of the rows, so log-probabilities, likelihood ratios
//! and KL divergences are all computed in closed form. Reward tables and
//! preference datasets share the same index space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Finite index space: `num_prompts` prompts, each with the same number of
/// candidate completions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPromptSpace")]
pub struct PromptSpace {
    num_prompts: usize,
    completions_per_prompt: usize,
}

#[derive(Deserialize)]
struct RawPromptSpace {
    num_prompts: usize,
    completions_per_prompt: usize,
}

impl TryFrom<RawPromptSpace> for PromptSpace {
    type Error = Error;

    fn try_from(raw: RawPromptSpace) -> Result<Self> {
        PromptSpace::new(raw.num_prompts, raw.completions_per_prompt)
    }
}

impl PromptSpace {
    /// A preference pair needs two distinct completions, hence
    /// `completions_per_prompt >= 2`.
    pub fn new(num_prompts: usize, completions_per_prompt: usize) -> Result<Self> {
        if num_prompts < 1 {
            return Err(Error::InvalidConfig("num_prompts must be >= 1".into()));
        }
        if completions_per_prompt < 2 {
            return Err(Error::InvalidConfig(
                "completions_per_prompt must be >= 2".into(),
            ));
        }
        Ok(Self {
            num_prompts,
            completions_per_prompt,
        })
    }

    pub fn num_prompts(&self) -> usize {
        self.num_prompts
    }

    pub fn completions_per_prompt(&self) -> usize {
        self.completions_per_prompt
    }

    /// Total number of (prompt, completion) cells.
    pub fn total(&self) -> usize {
        self.num_prompts * self.completions_per_prompt
    }

    pub(crate) fn check_prompt(&self, prompt: usize) -> Result<()> {
        if prompt >= self.num_prompts {
            return Err(Error::IndexOutOfRange(format!(
                "prompt {prompt} >= num_prompts {}",
                self.num_prompts
            )));
        }
        Ok(())
    }

    pub(crate) fn flat_index(&self, prompt: usize, completion: usize) -> Result<usize> {
        self.check_prompt(prompt)?;
        if completion >= self.completions_per_prompt {
            return Err(Error::IndexOutOfRange(format!(
                "completion {completion} >= completions_per_prompt {}",
                self.completions_per_prompt
            )));
        }
        Ok(prompt * self.completions_per_prompt + completion)
    }

    pub(crate) fn check_matches(&self, other: &PromptSpace) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch(format!(
                "prompt spaces differ: {}x{} vs {}x{}",
                self.num_prompts,
                self.completions_per_prompt,
                other.num_prompts,
                other.completions_per_prompt
            )));
        }
        Ok(())
    }
}

/// Log-sum-exp with max subtraction; rows are never empty (K >= 2).
pub(crate) fn log_sum_exp<T: Real>(row: &[T]) -> T {
    let max = row.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v));
    let sum = row
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}

fn check_finite<T: Real>(values: &[T], what: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{what} entry {i} is {v}")));
        }
    }
    Ok(())
}

/// Softmax policy given by a finite logit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy<T> {
    space: PromptSpace,
    logits: Vec<T>, // row-major [prompt][completion]
}

impl<T: Real> TabularPolicy<T> {
    pub fn new(space: PromptSpace, logits: Vec<T>) -> Result<Self> {
        if logits.len() != space.total() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} logits, got {}",
                space.total(),
                logits.len()
            )));
        }
        check_finite(&logits, "logit")?;
        Ok(Self { space, logits })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let num_prompts = rows.len();
        let k = rows.first().map(Vec::len).unwrap_or(0);
        let space = PromptSpace::new(num_prompts, k)?;
        let mut logits = Vec::with_capacity(space.total());
        for row in rows {
            if row.len() != k {
                return Err(Error::ShapeMismatch("ragged logit rows".into()));
            }
            logits.extend_from_slice(row);
        }
        Self::new(space, logits)
    }

    /// The uniform policy: all logits zero.
    pub fn uniform(space: PromptSpace) -> Self {
        Self {
            space,
            logits: vec![T::zero(); space.total()],
        }
    }

    pub fn space(&self) -> PromptSpace {
        self.space
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub(crate) fn logits_mut(&mut self) -> &mut [T] {
        &mut self.logits
    }

    pub fn row(&self, prompt: usize) -> Result<&[T]> {
        self.space.check_prompt(prompt)?;
        let k = self.space.completions_per_prompt;
        Ok(&self.logits[prompt * k..(prompt + 1) * k])
    }

    /// `log pi(completion | prompt)`, computed as logit minus the row
    /// log-sum-exp. Always <= 0 up to rounding.
    pub fn log_prob(&self, prompt: usize, completion: usize) -> Result<T> {
        let idx = self.space.flat_index(prompt, completion)?;
        let row = self.row(prompt)?;
        Ok(self.logits[idx] - log_sum_exp(row))
    }

    /// Exact softmax probabilities of one prompt row.
    pub fn probabilities(&self, prompt: usize) -> Result<Vec<T>> {
        let row = self.row(prompt)?;
        let lse = log_sum_exp(row);
        Ok(row.iter().map(|&z| (z - lse).exp()).collect())
    }

    /// All log-probabilities, one row log-sum-exp each.
    pub fn log_prob_table(&self) -> LogProbTable<T> {
        let k = self.space.completions_per_prompt;
        let mut values = Vec::with_capacity(self.space.total());
        for prompt in 0..self.space.num_prompts {
            let row = &self.logits[prompt * k..(prompt + 1) * k];
            let lse = log_sum_exp(row);
            values.extend(row.iter().map(|&z| z - lse));
        }
        LogProbTable {
            space: self.space,
            values,
        }
    }

    pub fn to_json_string(&self) -> String {
        matrix_to_json(self.space, &self.logits)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let (space, values) = matrix_from_json(s)?;
        Self::new(space, values)
    }
}

/// Precomputed `log pi(y|x)` matrix; shares the policy's index layout.
#[derive(Debug, Clone)]
pub struct LogProbTable<T> {
    space: PromptSpace,
    values: Vec<T>,
}

impl<T: Real> LogProbTable<T> {
    pub fn space(&self) -> PromptSpace {
        self.space
    }

    /// Unchecked beyond debug assertions: callers index with validated pairs.
    pub(crate) fn get(&self, prompt: usize, completion: usize) -> T {
        let k = self.space.completions_per_prompt;
        debug_assert!(prompt < self.space.num_prompts && completion < k);
        self.values[prompt * k + completion]
    }
}

/// `log(pi(y|x) / pi_ref(y|x))`.
pub fn log_ratio<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    prompt: usize,
    completion: usize,
) -> Result<T> {
    policy.space.check_matches(&reference.space)?;
    Ok(policy.log_prob(prompt, completion)? - reference.log_prob(prompt, completion)?)
}

/// Reward implicitly encoded by a policy relative to a reference:
/// `beta * log(pi/pi_ref)`.
pub fn implicit_reward<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    prompt: usize,
    completion: usize,
    beta: T,
) -> Result<T> {
    if beta <= T::zero() {
        return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
    }
    Ok(beta * log_ratio(policy, reference, prompt, completion)?)
}

/// KL(policy || reference), the exact per-prompt sum averaged uniformly over
/// prompts. Non-negative, zero iff the per-prompt distributions agree.
pub fn kl_policy<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
) -> Result<T> {
    policy.space.check_matches(&reference.space)?;
    let lp = policy.log_prob_table();
    let lr = reference.log_prob_table();
    let space = policy.space;
    let mut total = T::zero();
    for x in 0..space.num_prompts {
        let mut row = T::zero();
        for y in 0..space.completions_per_prompt {
            let lpxy = lp.get(x, y);
            row += lpxy.exp() * (lpxy - lr.get(x, y));
        }
        total += row;
    }
    Ok(total / T::of(space.num_prompts as f64))
}

/// Ground-truth (or learned) rewards on the same index space as a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable<T> {
    space: PromptSpace,
    values: Vec<T>,
}

impl<T: Real> RewardTable<T> {
    pub fn new(space: PromptSpace, values: Vec<T>) -> Result<Self> {
        if values.len() != space.total() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} reward entries, got {}",
                space.total(),
                values.len()
            )));
        }
        check_finite(&values, "reward")?;
        Ok(Self { space, values })
    }

    pub fn space(&self) -> PromptSpace {
        self.space
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, prompt: usize) -> Result<&[T]> {
        self.space.check_prompt(prompt)?;
        let k = self.space.completions_per_prompt;
        Ok(&self.values[prompt * k..(prompt + 1) * k])
    }

    pub fn value(&self, prompt: usize, completion: usize) -> Result<T> {
        let idx = self.space.flat_index(prompt, completion)?;
        Ok(self.values[idx])
    }

    pub fn to_json_string(&self) -> String {
        matrix_to_json(self.space, &self.values)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let (space, values) = matrix_from_json(s)?;
        Self::new(space, values)
    }
}

/// One labeled comparison: `chosen` was preferred to `rejected` on `prompt`.
/// `flipped` records injected-noise provenance and never affects any loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: usize,
    pub chosen: usize,
    pub rejected: usize,
    pub flipped: bool,
}

impl PreferencePair {
    pub fn new(prompt: usize, chosen: usize, rejected: usize) -> Self {
        Self {
            prompt,
            chosen,
            rejected,
            flipped: false,
        }
    }

    fn validate(&self, space: &PromptSpace) -> Result<()> {
        space.flat_index(self.prompt, self.chosen)?;
        space.flat_index(self.prompt, self.rejected)?;
        if self.chosen == self.rejected {
            return Err(Error::InvalidConfig(format!(
                "pair on prompt {} has chosen == rejected == {}",
                self.prompt, self.chosen
            )));
        }
        Ok(())
    }
}

/// Ordered list of preference pairs over one `PromptSpace`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceDataset {
    space: PromptSpace,
    pairs: Vec<PreferencePair>,
}

impl PreferenceDataset {
    pub fn new(space: PromptSpace, pairs: Vec<PreferencePair>) -> Result<Self> {
        for pair in &pairs {
            pair.validate(&space)?;
        }
        Ok(Self { space, pairs })
    }

    pub fn space(&self) -> PromptSpace {
        self.space
    }

    pub fn pairs(&self) -> &[PreferencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// One JSON object per line, in dataset order.
    pub fn to_jsonl_string(&self) -> String {
        let mut out = String::new();
        for pair in &self.pairs {
            out.push_str(&serde_json::to_string(pair).expect("pair serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl_str(space: PromptSpace, s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for line in s.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            pairs.push(serde_json::from_str::<PreferencePair>(line)?);
        }
        Self::new(space, pairs)
    }
}

/// 17 significant decimal digits: enough to reproduce any f64 exactly.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn matrix_to_json<T: Real>(space: PromptSpace, values: &[T]) -> String {
    let k = space.completions_per_prompt;
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"num_prompts\": {},\n", space.num_prompts));
    out.push_str(&format!(
        "  \"completions_per_prompt\": {},\n",
        space.completions_per_prompt
    ));
    out.push_str("  \"logits\": [\n");
    for prompt in 0..space.num_prompts {
        out.push_str("    [");
        for y in 0..k {
            if y > 0 {
                out.push_str(", ");
            }
            out.push_str(&format_f64(values[prompt * k + y].as_f64()));
        }
        out.push(']');
        if prompt + 1 < space.num_prompts {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ]\n}\n");
    out
}

#[derive(Deserialize)]
struct MatrixDocument {
    num_prompts: usize,
    completions_per_prompt: usize,
    logits: Vec<Vec<f64>>,
}

fn matrix_from_json<T: Real>(s: &str) -> Result<(PromptSpace, Vec<T>)> {
    let doc: MatrixDocument = serde_json::from_str(s)?;
    let space = PromptSpace::new(doc.num_prompts, doc.completions_per_prompt)?;
    if doc.logits.len() != doc.num_prompts {
        return Err(Error::ShapeMismatch(format!(
            "expected {} rows, got {}",
            doc.num_prompts,
            doc.logits.len()
        )));
    }
    let mut values = Vec::with_capacity(space.total());
    for row in &doc.logits {
        if row.len() != doc.completions_per_prompt {
            return Err(Error::ShapeMismatch("ragged matrix rows".into()));
        }
        values.extend(row.iter().map(|&v| T::of(v)));
    }
    Ok((space, values))
}
