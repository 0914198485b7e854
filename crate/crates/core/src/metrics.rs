//! Evaluation metrics.
//!
//! Structural error categories are rule-based over tagged lines:
//!
//! | category                | opportunity                          | violation                                  |
//! |-------------------------|--------------------------------------|--------------------------------------------|
//! | `inconsistent_headings` | heading line                         | level differs from the doc's first heading |
//! | `missing_bullet_points` | body line ending in `:`              | next line is not a bullet                  |
//! | `improper_indentation`  | bullet or numbered line              | odd number of leading spaces               |
//! | `incorrect_numbering`   | numbered line                        | number ≠ its 1-based position in the block |
//!
//! A numbered block is a maximal run of consecutive numbered lines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_dataset, detokenize, heading_level, lines, list_number, tag_line, tokenize, Example, LineTag, StructuredDoc,
    TokenId,
};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::model::{Evaluator, ModelParams};
use crate::rng::{SeededRng, Stream};
use crate::train::split_documents;

pub const DEFAULT_EPS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

pub const CATEGORIES: [&str; 4] = [
    "inconsistent_headings",
    "missing_bullet_points",
    "improper_indentation",
    "incorrect_numbering",
];

/// `exp` of the mean of per-token negative log-likelihoods.
pub fn perplexity_from_nll(nlls: &[f64]) -> Result<f64> {
    if nlls.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((nlls.iter().sum::<f64>() / nlls.len() as f64).exp())
}

pub fn perplexity(model: &ModelParams, examples: &[Example]) -> Result<f64> {
    Ok(model.evaluator().mean_nll(examples)?.exp())
}

/// Anything with an embedding layer followed by an encoder.
pub trait LatentEncoder {
    /// Concatenated input embeddings of a window.
    fn embed(&self, tokens: &[TokenId]) -> Result<Vec<f64>>;
    fn encode_embedded(&self, x: &[f64]) -> Vec<f64>;
}

impl LatentEncoder for Evaluator<'_> {
    fn embed(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        Evaluator::embed(self, tokens)
    }

    fn encode_embedded(&self, x: &[f64]) -> Vec<f64> {
        Evaluator::encode_embedded(self, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub eps: f64,
    pub latent_std: f64,
}

/// Sample standard deviation (n − 1 denominator).
fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Mean per-coordinate std of latents under `passes` random embedding perturbations of norm `eps`.
///
/// The perturbation stream is reseeded for every eps, so all magnitudes see
/// the same directions. Rows come back sorted by eps.
pub fn latent_stability<E: LatentEncoder + ?Sized>(
    encoder: &E,
    windows: &[Vec<TokenId>],
    eps_list: &[f64],
    passes: usize,
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    if passes < 2 {
        return Err(Error::NeedTwoPasses(passes));
    }
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("eps list must be non-empty".into()));
    }
    if let Some(e) = eps_list.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::InvalidConfig(format!("eps must be finite and ≥ 0, got {e}")));
    }
    let embedded: Vec<Vec<f64>> = windows.iter().map(|w| encoder.embed(w)).collect::<Result<_>>()?;
    let mut eps_sorted = eps_list.to_vec();
    eps_sorted.sort_by(f64::total_cmp);

    let mut rows = Vec::with_capacity(eps_sorted.len());
    for &eps in &eps_sorted {
        let mut rng = SeededRng::new(seed, Stream::Perturbation, 0);
        let mut total = 0.0;
        let mut count = 0usize;
        for x in &embedded {
            let latents: Vec<Vec<f64>> = (0..passes)
                .map(|_| {
                    let u = rng.unit_direction(x.len());
                    let xp: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + eps * b).collect();
                    encoder.encode_embedded(&xp)
                })
                .collect();
            let d = latents[0].len();
            for c in 0..d {
                let col: Vec<f64> = latents.iter().map(|z| z[c]).collect();
                total += sample_std(&col);
            }
            count += d;
        }
        rows.push(StabilityRow {
            eps,
            latent_std: total / count as f64,
        });
    }
    Ok(rows)
}

/// CSV with header `eps,latent_std`.
pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let mut out = String::from("eps,latent_std\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", fmt_f64(r.eps), fmt_f64(r.latent_std)));
    }
    out
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean of the model's embedding rows over `tokens` (zero vector for no tokens).
pub fn text_embedding(model: &ModelParams, tokens: &[TokenId]) -> Vec<f64> {
    let mut acc = vec![0.0; model.dims.embed];
    for &t in tokens {
        for (a, v) in acc.iter_mut().zip(model.embedding(t)) {
            *a += v;
        }
    }
    if !tokens.is_empty() {
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

/// Mean pairwise cosine similarity; identical vectors count as 1 even at zero norm.
pub fn mean_pairwise_cosine(vectors: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            total += if vectors[i] == vectors[j] {
                1.0
            } else {
                cosine(&vectors[i], &vectors[j])
            };
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Greedy generation from every prompt variant, scored by the mean pairwise
/// cosine of the outputs' mean token embeddings, averaged over groups.
pub fn semantic_consistency(
    model: &ModelParams,
    groups: &[Vec<Vec<TokenId>>],
    max_len: usize,
    seed: u64,
) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for group in groups {
        if group.len() < 2 {
            return Err(Error::SmallGroup(group.len()));
        }
        let vectors: Vec<Vec<f64>> = group
            .iter()
            .map(|prompt| Ok(text_embedding(model, &model.generate(prompt, max_len, 0.0, seed)?)))
            .collect::<Result<_>>()?;
        total += mean_pairwise_cosine(&vectors);
    }
    Ok(total / groups.len() as f64)
}

impl AsRef<str> for StructuredDoc {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

/// Violations and opportunities per category, in [`CATEGORIES`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StructuralCounts {
    pub violations: [usize; 4],
    pub opportunities: [usize; 4],
}

impl StructuralCounts {
    pub fn of_text(text: &str) -> Self {
        let mut c = Self::default();
        let ls = lines(text);
        let tags: Vec<LineTag> = ls.iter().map(|l| tag_line(l)).collect();
        let mut first_level = None;
        let mut block_pos = 0u64;
        for (i, (line, &tag)) in ls.iter().zip(&tags).enumerate() {
            match tag {
                LineTag::Heading => {
                    let level = heading_level(line);
                    let first = *first_level.get_or_insert(level);
                    c.opportunities[0] += 1;
                    c.violations[0] += usize::from(level != first);
                }
                LineTag::Body if line.trim_end().ends_with(':') => {
                    c.opportunities[1] += 1;
                    c.violations[1] += usize::from(tags.get(i + 1) != Some(&LineTag::Bullet));
                }
                _ => {}
            }
            if matches!(tag, LineTag::Bullet | LineTag::Numbered) {
                let indent = line.len() - line.trim_start_matches(' ').len();
                c.opportunities[2] += 1;
                c.violations[2] += indent % 2;
            }
            if tag == LineTag::Numbered {
                block_pos += 1;
                c.opportunities[3] += 1;
                c.violations[3] += usize::from(list_number(line) != Some(block_pos));
            } else {
                block_pos = 0;
            }
        }
        c
    }

    pub fn add(&mut self, other: &Self) {
        for k in 0..4 {
            self.violations[k] += other.violations[k];
            self.opportunities[k] += other.opportunities[k];
        }
    }
}

/// Percent error rates over a document set.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRates {
    pub counts: StructuralCounts,
}

impl ErrorRates {
    /// Percent per category in [`CATEGORIES`] order; 0 where there were no opportunities.
    pub fn rates(&self) -> [f64; 4] {
        let c = &self.counts;
        std::array::from_fn(|k| {
            if c.opportunities[k] == 0 {
                0.0
            } else {
                100.0 * c.violations[k] as f64 / c.opportunities[k] as f64
            }
        })
    }

    pub fn as_map(&self) -> BTreeMap<String, f64> {
        CATEGORIES.iter().map(|s| s.to_string()).zip(self.rates()).collect()
    }

    /// `1 − mean(rates with opportunities)/100`.
    pub fn alignment_index(&self) -> Result<f64> {
        alignment_from_rates(&self.rates(), &self.counts.opportunities.map(|o| o > 0))
    }
}

pub fn alignment_from_rates(rates: &[f64; 4], populated: &[bool; 4]) -> Result<f64> {
    let used: Vec<f64> = rates
        .iter()
        .zip(populated)
        .filter(|(_, &p)| p)
        .map(|(r, _)| *r)
        .collect();
    if used.is_empty() {
        return Err(Error::NoStructure);
    }
    Ok(1.0 - used.iter().sum::<f64>() / used.len() as f64 / 100.0)
}

pub fn structural_error_rates<S: AsRef<str>>(docs: &[S]) -> Result<ErrorRates> {
    if docs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = StructuralCounts::default();
    for d in docs {
        counts.add(&StructuralCounts::of_text(d.as_ref()));
    }
    Ok(ErrorRates { counts })
}

pub fn structural_alignment_index<S: AsRef<str>>(docs: &[S]) -> Result<f64> {
    structural_error_rates(docs)?.alignment_index()
}

/// Character lengths of the sentences of a text.
///
/// Each line is split after `.`, `!` and `?`; a non-blank remainder at line
/// end is a sentence too. Line indentation is not counted, the space between
/// two sentences on one line belongs to the second.
pub fn sentence_lengths(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for line in lines(text) {
        let mut len = 0usize;
        let mut blank = true;
        for ch in line.trim_start_matches(' ').chars() {
            len += 1;
            blank &= ch.is_whitespace();
            if matches!(ch, '.' | '!' | '?') {
                out.push(len);
                len = 0;
                blank = true;
            }
        }
        if len > 0 && !blank {
            out.push(len);
        }
    }
    out
}

/// Sentence counts keyed by bin start `k·bin_width`.
pub fn sentence_length_histogram<S: AsRef<str>>(docs: &[S], bin_width: usize) -> Result<BTreeMap<usize, usize>> {
    if bin_width == 0 {
        return Err(Error::InvalidConfig("bin_width must be ≥ 1".into()));
    }
    let mut hist = BTreeMap::new();
    for d in docs {
        for len in sentence_lengths(d.as_ref()) {
            *hist.entry(len / bin_width * bin_width).or_insert(0) += 1;
        }
    }
    Ok(hist)
}

/// Round half away from zero to one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Relative reduction `100·(baseline − treated)/baseline`, to one decimal.
pub fn improvement_pct(baseline: f64, treated: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::BadBaseline(baseline));
    }
    Ok(round1(100.0 * (baseline - treated) / baseline) + 0.0)
}

/// Everything `eval` measures for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub perplexity: f64,
    pub structural_alignment: f64,
    pub error_rates: BTreeMap<String, f64>,
    pub stability: Vec<StabilityRow>,
    pub semantic_consistency: f64,
    pub length_histogram: BTreeMap<usize, usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Better {
    Lower,
    Higher,
}

/// One row of the baseline/treated comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    pub baseline: f64,
    pub grlsm: f64,
    /// `None` when the baseline cannot anchor a relative change.
    pub improvement_pct: Option<f64>,
}

fn row(metric: String, baseline: f64, grlsm: f64, better: Better) -> ComparisonRow {
    let improvement = match better {
        _ if baseline == grlsm => Some(0.0),
        Better::Lower => improvement_pct(baseline, grlsm).ok(),
        Better::Higher => improvement_pct(baseline, grlsm).ok().map(|p| -p + 0.0),
    };
    ComparisonRow {
        metric,
        baseline,
        grlsm,
        improvement_pct: improvement,
    }
}

/// Relative improvements of `grlsm` over `baseline`, oriented so that positive is better.
pub fn compare(baseline: &MetricsReport, grlsm: &MetricsReport) -> Vec<ComparisonRow> {
    let mut rows = vec![
        row(
            "perplexity".into(),
            baseline.perplexity,
            grlsm.perplexity,
            Better::Lower,
        ),
        row(
            "structural_alignment".into(),
            baseline.structural_alignment,
            grlsm.structural_alignment,
            Better::Higher,
        ),
        row(
            "semantic_consistency".into(),
            baseline.semantic_consistency,
            grlsm.semantic_consistency,
            Better::Higher,
        ),
    ];
    for b in &baseline.stability {
        if let Some(g) = grlsm.stability.iter().find(|g| g.eps == b.eps) {
            rows.push(row(
                format!("latent_std@{:?}", b.eps),
                b.latent_std,
                g.latent_std,
                Better::Lower,
            ));
        }
    }
    for (k, b) in &baseline.error_rates {
        if let Some(g) = grlsm.error_rates.get(k) {
            rows.push(row(k.clone(), *b, *g, Better::Lower));
        }
    }
    rows
}

/// CSV with header `metric,baseline,grlsm,improvement_pct`.
///
/// Equal values report 0.0; otherwise the last cell is empty when the baseline is not positive.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("metric,baseline,grlsm,improvement_pct\n");
    for r in rows {
        let imp = r.improvement_pct.map(|p| format!("{p:.1}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.metric,
            fmt_f64(r.baseline),
            fmt_f64(r.grlsm),
            imp
        ));
    }
    out
}

/// Settings of the evaluation protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub eps: Vec<f64>,
    pub passes: usize,
    pub seed: u64,
    /// Held-out windows probed for latent stability.
    pub windows: usize,
    /// Held-out documents whose first line prompts a generation.
    pub samples: usize,
    pub gen_len: usize,
    pub bin_width: usize,
    /// Documents are truncated to this many tokens before scoring.
    pub max_len: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS.to_vec(),
            passes: 16,
            seed: 0,
            windows: 64,
            samples: 8,
            gen_len: 160,
            bin_width: 5,
            max_len: 256,
        }
    }
}

/// Held-out documents of a corpus under the model's training split; all documents if the split left none.
pub fn held_out_docs(model: &ModelParams, n_docs: usize) -> Vec<usize> {
    let (_, val) = split_documents(n_docs, model.config.seed);
    if val.is_empty() {
        (0..n_docs).collect()
    } else {
        val
    }
}

/// `count` evenly strided windows of the given examples.
pub fn probe_windows(examples: &[Example], count: usize) -> Vec<Vec<TokenId>> {
    let stride = (examples.len() / count.max(1)).max(1);
    examples
        .iter()
        .step_by(stride)
        .take(count)
        .map(|e| e.window.clone())
        .collect()
}

/// Prompt variants of one document: its first line with and without the
/// line break, and with the last word dropped.
pub fn prompt_variants(text: &str) -> Vec<String> {
    let first = text.split('\n').next().unwrap_or("");
    let shorter = match first.rfind(' ') {
        Some(i) => &first[..i],
        None => &first[..first.len().saturating_sub(1)],
    };
    vec![format!("{first}\n"), first.to_owned(), shorter.to_owned()]
}

/// Runs every metric of [`MetricsReport`] for one model on one corpus.
///
/// Perplexity and stability use held-out windows; structure, consistency and
/// sentence lengths are measured on greedy generations prompted by the first
/// line of held-out documents (the prompt is part of the scored text).
pub fn evaluate<S: AsRef<str>>(model: &ModelParams, texts: &[S], cfg: &EvalConfig) -> Result<MetricsReport> {
    let data = build_dataset(texts, &model.vocab, model.window, cfg.max_len, 0)?;
    let held = held_out_docs(model, texts.len());
    let examples = data.examples_for(&held);
    let perplexity = perplexity(model, &examples)?;
    let stability = latent_stability(
        &model.evaluator(),
        &probe_windows(&examples, cfg.windows),
        &cfg.eps,
        cfg.passes,
        cfg.seed,
    )?;

    let mut generated = Vec::new();
    let mut groups = Vec::new();
    for &d in held.iter().take(cfg.samples.max(1)) {
        let variants = prompt_variants(texts[d].as_ref());
        let prompt = &variants[0];
        let out = model.generate(&tokenize(prompt, &model.vocab), cfg.gen_len, 0.0, cfg.seed)?;
        generated.push(format!("{prompt}{}", detokenize(&out, &model.vocab)));
        groups.push(variants.iter().map(|v| tokenize(v, &model.vocab)).collect());
    }
    let rates = structural_error_rates(&generated)?;
    Ok(MetricsReport {
        perplexity,
        structural_alignment: rates.alignment_index()?,
        error_rates: rates.as_map(),
        stability,
        semantic_consistency: semantic_consistency(model, &groups, cfg.gen_len, cfg.seed)?,
        length_histogram: sentence_length_histogram(&generated, cfg.bin_width)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perplexity_arithmetic() {
        assert!((perplexity_from_nll(&[0.0, 4f64.ln()]).unwrap() - 2.0).abs() < 1e-12);
        assert!((perplexity_from_nll(&[16f64.ln(); 3]).unwrap() - 16.0).abs() < 1e-12);
        assert!(matches!(perplexity_from_nll(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn cosine_values() {
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(mean_pairwise_cosine(&[vec![0.0], vec![0.0]]), 1.0);
    }

    #[test]
    fn heading_rate_from_hand_built_doc() {
        let mut text = String::new();
        for k in 0..10 {
            text.push_str(if k == 3 || k == 7 {
                "## h\nbody.\n"
            } else {
                "# h\nbody.\n"
            });
        }
        let r = structural_error_rates(&[text]).unwrap();
        assert_eq!(r.counts.violations[0], 2);
        assert_eq!(r.counts.opportunities[0], 10);
        assert_eq!(r.rates()[0], 20.0);
    }

    #[test]
    fn numbering_rate_one_two_four() {
        let r = structural_error_rates(&["steps.\n1. a\n2. b\n4. c"]).unwrap();
        assert_eq!(round1(r.rates()[3]), 33.3);
        // A later block restarts at 1.
        let r = structural_error_rates(&["1. a\n2. b\ntext.\n1. c\n2. d"]).unwrap();
        assert_eq!(r.rates()[3], 0.0);
    }

    #[test]
    fn bullets_and_indentation() {
        let text = "# h\nkey points:\n- a\n - b\n  - c\nnotes:\n\n# g\nmore:";
        let r = structural_error_rates(&[text]).unwrap();
        assert_eq!(r.counts.opportunities[1], 3);
        assert_eq!(r.counts.violations[1], 2);
        assert_eq!(r.counts.opportunities[2], 3);
        assert_eq!(r.counts.violations[2], 1);
    }

    #[test]
    fn alignment_arithmetic() {
        let all = [true; 4];
        assert_eq!(alignment_from_rates(&[0.0; 4], &all).unwrap(), 1.0);
        assert!((alignment_from_rates(&[20.0, 0.0, 0.0, 0.0], &all).unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(alignment_from_rates(&[100.0; 4], &all).unwrap(), 0.0);
        assert!(matches!(
            alignment_from_rates(&[0.0; 4], &[false; 4]),
            Err(Error::NoStructure)
        ));
        assert!(matches!(
            structural_alignment_index(&["plain text."]),
            Err(Error::NoStructure)
        ));
        assert!(matches!(structural_error_rates::<&str>(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn sentence_segmentation() {
        assert_eq!(sentence_lengths("ab. cd."), vec![3, 4]);
        assert_eq!(sentence_lengths("  ab\nwhat? yes"), vec![2, 5, 4]);
        assert_eq!(sentence_lengths("ab. "), vec![3]);
        let h = sentence_length_histogram(&["ab. cd."], 1).unwrap();
        assert_eq!(h, BTreeMap::from([(3, 1), (4, 1)]));
        assert!(sentence_length_histogram(&[""], 1).unwrap().is_empty());
        let h = sentence_length_histogram(&["a. bb. ccc. dddd. eeeee."], 3).unwrap();
        assert_eq!(h, BTreeMap::from([(0, 1), (3, 2), (6, 2)]));
        assert!(sentence_length_histogram(&["a."], 0).is_err());
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(improvement_pct(0.85, 0.71).unwrap(), 16.5);
        assert_eq!(improvement_pct(14.2, 9.1).unwrap(), 35.9);
        assert_eq!(improvement_pct(35.7, 28.4).unwrap(), 20.4);
        let same = improvement_pct(3.3, 3.3).unwrap();
        assert_eq!(same, 0.0);
        assert!(same.is_sign_positive());
        assert!(matches!(improvement_pct(0.0, 1.0), Err(Error::BadBaseline(_))));
        assert!(improvement_pct(-1.0, 1.0).is_err());
    }

    #[test]
    fn identical_reports_compare_to_zero() {
        let rep = MetricsReport {
            perplexity: 12.0,
            structural_alignment: 0.9,
            error_rates: CATEGORIES.iter().map(|c| (c.to_string(), 5.0)).collect(),
            stability: vec![StabilityRow {
                eps: 0.1,
                latent_std: 0.2,
            }],
            semantic_consistency: 0.5,
            length_histogram: BTreeMap::new(),
        };
        let rows = compare(&rep, &rep);
        assert_eq!(rows.len(), 8);
        let csv = comparison_csv(&rows);
        assert!(csv.starts_with("metric,baseline,grlsm,improvement_pct\n"));
        for line in csv.lines().skip(1) {
            assert!(line.ends_with(",0.0"), "{line}");
        }
    }
}
