//! The interactive testing session.
//!
//! A [`Session`] owns the masked hypotheses and enforces what the analyst may
//! see: masked values and covariates for everything, full p-values only for
//! hypotheses that have left the candidate set (or sit in a gap scheme's
//! middle band). The analyst shrinks the candidate set with [`Session::exclude`];
//! after every exclusion the session checks the stopping rule on the
//! quarantined bits and, once it holds, rejects the remaining candidates
//! whose bit is `+1`.
//!
//! Every mutation is appended to a journal. Replaying the journal against the
//! same inputs reproduces the session exactly; see [`Session::replay`].

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::masking::{self, MaskedPair, MaskingScheme, Sign};

const JOURNAL_MAGIC: &str = "ifwer-journal";
const JOURNAL_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disclosure {
    /// Only the stop flag is shown while the session is active.
    #[default]
    Strict,
    /// The numeric estimate is shown as well. It is a function of the number
    /// of quarantined negative bits, so an analyst who reacts to it is no
    /// longer choosing from masked information alone.
    EstimateVisible,
}

fn default_k() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub scheme: MaskingScheme,
    pub alpha: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub adjusted_start: bool,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub disclosure: Disclosure,
}

impl SessionConfig {
    pub fn new(scheme: MaskingScheme, alpha: f64) -> Self {
        SessionConfig {
            scheme,
            alpha,
            k: 1,
            adjusted_start: false,
            rng_seed: 0,
            disclosure: Disclosure::Strict,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.adjusted_start && self.k > 1 {
            return Err(Error::Config(
                "the randomized adjusted start is defined for k = 1 only".into(),
            ));
        }
        if !masking::feasible(&self.scheme, self.alpha) {
            return Err(Error::Infeasible {
                scheme: self.scheme.label(),
                alpha: self.alpha,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordState {
    Active,
    Excluded { step: usize },
    MiddleBand,
}

/// One hypothesis as held by the session. The p-value and bit stay private;
/// the analyst sees a record only through [`AnalystView`].
#[derive(Debug, Clone)]
pub struct HypothesisRecord {
    index: usize,
    covariates: Vec<f64>,
    masked: MaskedPair,
    p: f64,
    state: RecordState,
}

impl HypothesisRecord {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn g(&self) -> Option<f64> {
        self.masked.g()
    }

    pub fn state(&self) -> RecordState {
        self.state
    }

    fn bit(&self) -> Option<Sign> {
        self.masked.bit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Continued,
    Stopped { rejections: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewState {
    Active,
    Excluded,
    MiddleBand,
}

/// Per-hypothesis slice of the analyst's information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisView {
    pub index: usize,
    pub covariates: Vec<f64>,
    pub state: ViewState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_at: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit: Option<i8>,
}

/// Everything the analyst is allowed to know at the current step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystView {
    pub step: usize,
    pub stopped: bool,
    pub active_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwer_estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<Vec<usize>>,
    pub hypotheses: Vec<HypothesisView>,
}

impl AnalystView {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn is_active(&self, index: usize) -> bool {
        self.hypotheses
            .get(index)
            .is_some_and(|h| h.state == ViewState::Active)
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.hypotheses
            .iter()
            .filter(|h| h.state == ViewState::Active)
            .map(|h| h.index)
            .collect()
    }
}

/// One journal line: `step<TAB>indices<TAB>rng_counter`.
///
/// Step 0 is reserved for the randomized adjusted start; its index list holds
/// the extra rejections that were drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub step: usize,
    pub indices: Vec<usize>,
    pub rng_counter: u128,
}

impl fmt::Display for JournalRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let indices: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{}\t{}\t{}", self.step, indices.join(","), self.rng_counter)
    }
}

/// Parsed journal: the input digest and the ordered mutation records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Journal {
    pub digest: String,
    pub records: Vec<JournalRecord>,
}

impl Journal {
    pub fn header(digest: &str) -> String {
        format!("{JOURNAL_MAGIC}\t{JOURNAL_VERSION}\t{digest}")
    }

    pub fn parse(text: &str) -> Result<Journal> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Journal("empty journal".into()))?;
        let mut parts = header.split('\t');
        let (magic, version, digest) = (parts.next(), parts.next(), parts.next());
        if magic != Some(JOURNAL_MAGIC) || version != Some(JOURNAL_VERSION) || parts.next().is_some()
        {
            return Err(Error::Journal(format!("bad header line: {header:?}")));
        }
        let digest = digest.unwrap_or_default();
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::Journal(format!("bad digest {digest:?}")));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Journal(format!("line {}: malformed record {line:?}", lineno + 2));
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad());
            }
            let step = fields[0].parse().map_err(|_| bad())?;
            let indices = if fields[1].is_empty() {
                Vec::new()
            } else {
                fields[1]
                    .split(',')
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad())?
            };
            let rng_counter = fields[2].parse().map_err(|_| bad())?;
            records.push(JournalRecord {
                step,
                indices,
                rng_counter,
            });
        }
        Ok(Journal {
            digest: digest.to_ascii_lowercase(),
            records,
        })
    }
}

impl fmt::Display for Journal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Journal::header(&self.digest))?;
        for r in &self.records {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Hex SHA-256 over the configuration and the exact input bits.
pub fn input_digest(config: &SessionConfig, pvalues: &[f64], covariates: &[Vec<f64>]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"ifwer-session v1\n");
    let config_json = serde_json::to_string(config).expect("config serializes");
    hasher.update(config_json.as_bytes());
    hasher.update(b"\n");
    for (i, p) in pvalues.iter().enumerate() {
        hasher.update(format!("{:016x}", p.to_bits()).as_bytes());
        if let Some(row) = covariates.get(i) {
            for x in row {
                hasher.update(format!(",{:016x}", x.to_bits()).as_bytes());
            }
        }
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    records: Vec<HypothesisRecord>,
    log: Vec<JournalRecord>,
    digest: String,
    step: usize,
    active: usize,
    n_minus: usize,
    status: Status,
    rejections: Option<Vec<usize>>,
    adjusted: bool,
    rng: ChaCha20Rng,
}

impl Session {
    /// Masks every p-value and opens the session with all masked hypotheses
    /// as candidates.
    ///
    /// `covariates` may be empty (no side information); otherwise it needs
    /// one equally long row per p-value. If the stopping rule already holds
    /// before any exclusion the session stops at once, running the
    /// randomized adjusted start when the configuration asks for it.
    pub fn create(pvalues: &[f64], covariates: Vec<Vec<f64>>, config: SessionConfig) -> Result<Session> {
        config.validate()?;
        if pvalues.is_empty() {
            return Err(Error::EmptyInput);
        }
        let covariates = if covariates.is_empty() {
            vec![Vec::new(); pvalues.len()]
        } else {
            covariates
        };
        if covariates.len() != pvalues.len() {
            return Err(Error::LengthMismatch(format!(
                "{} p-values but {} covariate rows",
                pvalues.len(),
                covariates.len()
            )));
        }
        let width = covariates[0].len();
        if let Some(i) = covariates.iter().position(|row| row.len() != width) {
            return Err(Error::Covariates(format!(
                "row {i} has {} covariates, expected {width}",
                covariates[i].len()
            )));
        }
        let digest = input_digest(&config, pvalues, &covariates);

        let mut records = Vec::with_capacity(pvalues.len());
        for (index, (&p, cov)) in pvalues.iter().zip(covariates).enumerate() {
            let masked = masking::mask(p, &config.scheme)?;
            let state = match masked {
                MaskedPair::Plain(_) => RecordState::MiddleBand,
                MaskedPair::Masked { .. } => RecordState::Active,
            };
            records.push(HypothesisRecord {
                index,
                covariates: cov,
                masked,
                p,
                state,
            });
        }
        let active = records
            .iter()
            .filter(|r| r.state == RecordState::Active)
            .count();
        let n_minus = records
            .iter()
            .filter(|r| r.state == RecordState::Active && r.bit() == Some(Sign::Minus))
            .count();

        let mut session = Session {
            rng: ChaCha20Rng::seed_from_u64(config.rng_seed),
            config,
            records,
            log: Vec::new(),
            digest,
            step: 0,
            active,
            n_minus,
            status: Status::Active,
            rejections: None,
            adjusted: false,
        };
        if session.stop_condition_holds() {
            if session.config.adjusted_start {
                session.adjusted_start()?;
            } else {
                session.stop();
            }
        }
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn scheme(&self) -> &MaskingScheme {
        &self.config.scheme
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_stopped(&self) -> bool {
        self.status == Status::Stopped
    }

    pub fn active_count(&self) -> usize {
        self.active
    }

    pub fn records(&self) -> &[HypothesisRecord] {
        &self.records
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn rejections(&self) -> Option<&[usize]> {
        self.rejections.as_deref()
    }

    pub fn exclusion_log(&self) -> &[JournalRecord] {
        &self.log
    }

    /// Number of active candidates whose bit is `-1`.
    ///
    /// This is quarantined information; it is exposed for auditing and
    /// testing and must not be fed back into exclusion choices.
    pub fn quarantined_negative_count(&self) -> usize {
        self.n_minus
    }

    /// The bit of hypothesis `index`, if it may be revealed.
    pub fn revealed_bit(&self, index: usize) -> Option<Sign> {
        let r = self.records.get(index)?;
        if r.state == RecordState::Active && !self.is_stopped() {
            None
        } else {
            r.bit()
        }
    }

    /// The p-value of hypothesis `index`, if it may be revealed.
    pub fn revealed_p(&self, index: usize) -> Option<f64> {
        let r = self.records.get(index)?;
        if r.state == RecordState::Active && !self.is_stopped() {
            None
        } else {
            Some(r.p)
        }
    }

    fn current_estimate(&self) -> f64 {
        masking::estimate(self.n_minus, self.config.k, &self.config.scheme)
    }

    fn stop_condition_holds(&self) -> bool {
        masking::within_level(self.current_estimate(), self.config.alpha)
    }

    fn positive_candidates(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.state == RecordState::Active && r.bit() == Some(Sign::Plus))
            .map(|r| r.index)
            .collect()
    }

    fn stop(&mut self) -> Vec<usize> {
        let rejections = self.positive_candidates();
        self.status = Status::Stopped;
        self.rejections = Some(rejections.clone());
        rejections
    }

    pub fn view(&self) -> AnalystView {
        let stopped = self.is_stopped();
        let hypotheses = self
            .records
            .iter()
            .map(|r| {
                let (state, excluded_at) = match r.state {
                    RecordState::Active => (ViewState::Active, None),
                    RecordState::Excluded { step } => (ViewState::Excluded, Some(step)),
                    RecordState::MiddleBand => (ViewState::MiddleBand, None),
                };
                let revealed = stopped || r.state != RecordState::Active;
                HypothesisView {
                    index: r.index,
                    covariates: r.covariates.clone(),
                    state,
                    excluded_at,
                    g: r.g(),
                    p: revealed.then_some(r.p),
                    bit: if revealed { r.bit().map(Sign::as_i8) } else { None },
                }
            })
            .collect();
        let show_estimate = stopped || self.config.disclosure == Disclosure::EstimateVisible;
        AnalystView {
            step: self.step,
            stopped,
            active_count: self.active,
            fwer_estimate: show_estimate.then(|| self.current_estimate()),
            rejected: self.rejections.clone(),
            hypotheses,
        }
    }

    /// Removes `indices` from the candidate set, unmasking them, and checks
    /// the stopping rule once for the whole batch.
    pub fn exclude(&mut self, indices: &[usize]) -> Result<StepOutcome> {
        if self.is_stopped() {
            return Err(Error::Stopped);
        }
        if indices.is_empty() {
            return Err(Error::InvalidExclusion("empty exclusion set".into()));
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidExclusion("duplicate index in exclusion set".into()));
        }
        for &i in &sorted {
            match self.records.get(i) {
                Some(r) if r.state == RecordState::Active => {}
                _ => return Err(Error::NotActive(i)),
            }
        }
        self.step += 1;
        for &i in &sorted {
            let r = &mut self.records[i];
            r.state = RecordState::Excluded { step: self.step };
            if r.bit() == Some(Sign::Minus) {
                self.n_minus -= 1;
            }
        }
        self.active -= sorted.len();
        self.log.push(JournalRecord {
            step: self.step,
            indices: sorted,
            rng_counter: self.rng.get_word_pos(),
        });
        if self.stop_condition_holds() {
            Ok(StepOutcome::Stopped {
                rejections: self.stop(),
            })
        } else {
            Ok(StepOutcome::Continued)
        }
    }

    /// Probability with which each negative-bit candidate is additionally
    /// rejected by the adjusted start: `1 - (1 - alpha + est0)^(1/|R0-|)`.
    pub fn adjusted_start_probability(alpha: f64, estimate0: f64, n_minus: usize) -> f64 {
        if n_minus == 0 {
            return 0.0;
        }
        let base = (1.0 - alpha + estimate0).min(1.0);
        (1.0 - base.powf(1.0 / n_minus as f64)).max(0.0)
    }

    /// Spends the error budget left at step 0 by rejecting every `+1`
    /// candidate and each `-1` candidate independently with
    /// [`Self::adjusted_start_probability`].
    pub fn adjusted_start(&mut self) -> Result<StepOutcome> {
        if self.step > 0 {
            return Err(Error::AdjustedStart(
                "exclusions have already been made".into(),
            ));
        }
        if self.adjusted {
            return Err(Error::AdjustedStart("already applied".into()));
        }
        if self.config.k > 1 {
            return Err(Error::AdjustedStart("defined for k = 1 only".into()));
        }
        if !self.stop_condition_holds() {
            return Err(Error::AdjustedStart(
                "the stopping rule does not hold at step 0".into(),
            ));
        }
        let estimate0 = self.current_estimate();
        let prob = Self::adjusted_start_probability(self.config.alpha, estimate0, self.n_minus);
        let mut extra = Vec::new();
        if self.n_minus > 0 {
            for r in &self.records {
                if r.state == RecordState::Active && r.bit() == Some(Sign::Minus) {
                    let u: f64 = self.rng.random();
                    if u < prob {
                        extra.push(r.index);
                    }
                }
            }
        }
        let mut rejections = self.positive_candidates();
        rejections.extend_from_slice(&extra);
        rejections.sort_unstable();
        self.adjusted = true;
        self.status = Status::Stopped;
        self.rejections = Some(rejections.clone());
        self.log.push(JournalRecord {
            step: 0,
            indices: extra,
            rng_counter: self.rng.get_word_pos(),
        });
        Ok(StepOutcome::Stopped { rejections })
    }

    pub fn journal(&self) -> Journal {
        Journal {
            digest: self.digest.clone(),
            records: self.log.clone(),
        }
    }

    /// Rebuilds a session from its journal and the original inputs.
    ///
    /// Fails if the inputs do not hash to the journal's digest or if any
    /// recorded step cannot be reproduced exactly.
    pub fn replay(
        journal: &Journal,
        pvalues: &[f64],
        covariates: Vec<Vec<f64>>,
        config: SessionConfig,
    ) -> Result<Session> {
        let covariates = if covariates.is_empty() {
            vec![Vec::new(); pvalues.len()]
        } else {
            covariates
        };
        let digest = input_digest(&config, pvalues, &covariates);
        if digest != journal.digest {
            return Err(Error::Journal(
                "input digest does not match the journal header".into(),
            ));
        }
        let mut session = Session::create(pvalues, covariates, config)?;
        let mut applied = session.log.len();
        for (pos, record) in journal.records.iter().enumerate() {
            if pos < applied {
                if session.log[pos] != *record {
                    return Err(Error::Journal(format!(
                        "record {pos} differs from the replayed session"
                    )));
                }
                continue;
            }
            if record.step == 0 {
                session.adjusted_start()?;
            } else {
                if record.step != session.step + 1 {
                    return Err(Error::Journal(format!(
                        "record {pos} has step {} but the session is at step {}",
                        record.step, session.step
                    )));
                }
                session.exclude(&record.indices)?;
            }
            applied = session.log.len();
            if session.log.last() != Some(record) {
                return Err(Error::Journal(format!(
                    "record {pos} could not be reproduced"
                )));
            }
        }
        Ok(session)
    }
}
