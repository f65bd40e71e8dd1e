//! CSV layouts and checkpoint files.
//!
//! | file | columns |
//! |---|---|
//! | bars | `date, minute_index, mid_price, volume` |
//! | episode | `step, mid_price, fundamental, exec_volume` |
//! | rollouts | `agent, episode, gamma, log_prob, reward, action_0..1, pre_squash_0..1, obs_0..10, next_obs_0..10` |
//! | rewards | `step, agent, order_index, gamma, utility, short_penalty, cash_penalty, illiquidity_penalty, fundamental_penalty, total` |
//! | book | `step, side, price, volume` |
//! | curves | `update_idx, mean_reward, actor_loss, critic_loss, entropy` |
//! | metrics | `model, kurtosis, tail, acorr, vvcorr, kurtosis_ok, tail_ok, acorr_ok, vvcorr_ok` |
//! | ot | `model, ot_r, ot_t, ot_as, ot_total, status` |
//! | calibration | candidate columns, then `ot_r, ot_t, ot_as, ot_total, rank, status` |
//!
//! Undefined statistics are written as empty fields.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ecomarket_core::env::{Decision, EpisodeLog};
use ecomarket_core::lob::{ticks_to_price, Level};
use ecomarket_core::ot::{PriorCandidate, Ranked, Score};
use ecomarket_core::policy::{decode_checkpoint, encode_checkpoint, ActorCritic, CheckpointError, RolloutRecord, UpdateStats};
use ecomarket_core::stylized::{BarSeries, Day, MetricReport};
use ecomarket_core::train::EpisodeStats;
use thiserror::Error;

use crate::config::BaselineCandidate;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("no complete day of {t_len} bars")]
    NoCompleteDays { t_len: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Bars with a label per day.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedBars {
    pub dates: Vec<String>,
    pub bars: BarSeries,
}

/// Result of reading a bar file.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub bars: DatedBars,
    /// Days dropped for missing minutes, with the minutes they had.
    pub dropped: Vec<(String, usize)>,
}

pub fn write_bars<W: Write>(w: W, bars: &DatedBars) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "minute_index", "mid_price", "volume"])?;
    for (date, day) in bars.dates.iter().zip(bars.bars.days()) {
        for (m, (p, v)) in day.prices.iter().zip(&day.volumes).enumerate() {
            out.write_record([date.clone(), m.to_string(), p.to_string(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Groups rows by date in order of first appearance.
///
/// Rows must carry a minute index below `t_len` and a positive finite
/// price. Days without exactly one row per minute are dropped.
pub fn read_bars<R: Read>(r: R, t_len: usize) -> Result<Ingested, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut order: Vec<String> = Vec::new();
    let mut days: HashMap<String, Vec<Option<(f64, f64)>>> = HashMap::new();
    let mut duplicated: Vec<String> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |message: String| FormatError::Row { line, message };
        if rec.len() != 4 {
            return Err(row_err(format!("expected 4 fields, found {}", rec.len())));
        }
        let date = rec[0].to_string();
        let minute: usize = rec[1].parse().map_err(|_| row_err(format!("bad minute_index `{}`", &rec[1])))?;
        let price: f64 = rec[2].parse().map_err(|_| row_err(format!("bad mid_price `{}`", &rec[2])))?;
        let volume: f64 = rec[3].parse().map_err(|_| row_err(format!("bad volume `{}`", &rec[3])))?;
        if minute >= t_len {
            return Err(row_err(format!("minute_index {minute} outside [0, {t_len})")));
        }
        if !(price.is_finite() && price > 0.0) {
            return Err(row_err(format!("mid_price must be positive, got {price}")));
        }
        if !(volume.is_finite() && volume >= 0.0) {
            return Err(row_err(format!("volume must be non-negative, got {volume}")));
        }
        let slots = days.entry(date.clone()).or_insert_with(|| {
            order.push(date.clone());
            vec![None; t_len]
        });
        if slots[minute].replace((price, volume)).is_some() && !duplicated.contains(&date) {
            duplicated.push(date);
        }
    }

    let mut dates = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for date in order {
        let slots = days.remove(&date).expect("every date has slots");
        let present = slots.iter().filter(|s| s.is_some()).count();
        if present < t_len || duplicated.contains(&date) {
            log::warn!("dropping day {date}: {present} of {t_len} minutes");
            dropped.push((date, present));
            continue;
        }
        let (prices, volumes) = slots.into_iter().map(|s| s.expect("complete day")).unzip();
        dates.push(date);
        kept.push(Day { prices, volumes });
    }
    if kept.is_empty() {
        return Err(FormatError::NoCompleteDays { t_len });
    }
    let bars = BarSeries::new(kept).map_err(|e| FormatError::Row { line: 0, message: e.to_string() })?;
    Ok(Ingested { bars: DatedBars { dates, bars }, dropped })
}

pub fn ingest_bars(path: &Path, t_len: usize) -> Result<Ingested, FormatError> {
    read_bars(fs::File::open(path)?, t_len)
}

pub fn write_episode<W: Write>(w: W, log: &EpisodeLog) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "mid_price", "fundamental", "exec_volume"])?;
    for s in &log.steps {
        out.write_record([s.step.to_string(), s.mid.to_string(), s.fundamental.to_string(), s.exec_volume.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rollouts<W: Write>(w: W, records: &[(usize, RolloutRecord)]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> =
        ["agent", "episode", "gamma", "log_prob", "reward", "action_0", "action_1", "pre_squash_0", "pre_squash_1"]
            .map(String::from)
            .to_vec();
    header.extend((0..11).map(|i| format!("obs_{i}")));
    header.extend((0..11).map(|i| format!("next_obs_{i}")));
    out.write_record(&header)?;
    for (agent, r) in records {
        let mut row = vec![
            agent.to_string(),
            r.episode.to_string(),
            r.gamma.to_string(),
            r.log_prob.to_string(),
            r.reward.to_string(),
            r.action.v_tilde.to_string(),
            r.action.r_tilde.to_string(),
            r.pre_squash[0].to_string(),
            r.pre_squash[1].to_string(),
        ];
        row.extend(r.obs.0.iter().map(f64::to_string));
        row.extend(r.next_obs.0.iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rewards<W: Write>(w: W, decisions: &[Decision]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "step",
        "agent",
        "order_index",
        "gamma",
        "utility",
        "short_penalty",
        "cash_penalty",
        "illiquidity_penalty",
        "fundamental_penalty",
        "total",
    ])?;
    for d in decisions {
        let r = &d.reward;
        out.write_record([
            d.step.to_string(),
            d.agent.to_string(),
            d.order_index.to_string(),
            d.gamma.to_string(),
            r.utility.to_string(),
            r.short_penalty.to_string(),
            r.cash_penalty.to_string(),
            r.illiquidity_penalty.to_string(),
            r.fundamental_penalty.to_string(),
            r.total.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_book<W: Write>(w: W, step: u32, levels: &[Level]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "side", "price", "volume"])?;
    for l in levels {
        out.write_record([
            step.to_string(),
            l.side.as_str().to_string(),
            ticks_to_price(l.price).to_string(),
            l.volume.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curves<W: Write>(w: W, curves: &[UpdateStats]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["update_idx", "mean_reward", "actor_loss", "critic_loss", "entropy"])?;
    for c in curves {
        out.write_record([
            c.update_idx.to_string(),
            c.mean_reward.to_string(),
            c.actor_loss.to_string(),
            c.critic_loss.to_string(),
            c.entropy.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_train_episodes<W: Write>(w: W, episodes: &[EpisodeStats]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["episode", "mean_reward", "utility", "updates"])?;
    for e in episodes {
        out.write_record([
            e.episode.to_string(),
            e.mean_reward.to_string(),
            e.utility.to_string(),
            e.updates_so_far.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(w: W, rows: &[(String, MetricReport)]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "model",
        "kurtosis",
        "tail",
        "acorr",
        "vvcorr",
        "kurtosis_ok",
        "tail_ok",
        "acorr_ok",
        "vvcorr_ok",
    ])?;
    for (model, m) in rows {
        let c = m.conformity();
        out.write_record([
            model.clone(),
            opt(m.kurtosis),
            opt(m.tail),
            opt(m.acorr),
            opt(m.vv_corr),
            c.kurtosis.to_string(),
            c.tail.to_string(),
            c.acorr.to_string(),
            c.vv_corr.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn score_fields(score: &Result<Score, String>) -> [String; 5] {
    match score {
        Ok(s) => [s.ot_r.to_string(), s.ot_t.to_string(), s.ot_as.to_string(), s.total.to_string(), "ok".into()],
        Err(e) => [String::new(), String::new(), String::new(), String::new(), e.clone()],
    }
}

pub fn write_ot_report<W: Write>(w: W, rows: &[(String, Result<Score, String>)]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "ot_r", "ot_t", "ot_as", "ot_total", "status"])?;
    for (model, score) in rows {
        let mut row = vec![model.clone()];
        row.extend(score_fields(score));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Leading columns of a calibration report row.
pub trait CandidateColumns {
    const HEADER: &'static [&'static str];
    fn values(&self) -> Vec<String>;
}

impl CandidateColumns for PriorCandidate {
    const HEADER: &'static [&'static str] = &["lambda_sigma", "lambda_alpha", "lambda_gamma"];

    fn values(&self) -> Vec<String> {
        vec![self.lambda_sigma.to_string(), self.lambda_alpha.to_string(), self.lambda_gamma.to_string()]
    }
}

impl CandidateColumns for BaselineCandidate {
    const HEADER: &'static [&'static str] = &["lambda_c", "alpha", "tau", "tau_diff"];

    fn values(&self) -> Vec<String> {
        vec![self.lambda_c.to_string(), self.alpha.to_string(), self.tau.to_string(), self.tau_diff.to_string()]
    }
}

/// One row per candidate in ranked order.
pub fn write_calibration<W: Write, C: CandidateColumns>(w: W, ranked: &[Ranked<C>]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = C::HEADER.to_vec();
    header.extend(["ot_r", "ot_t", "ot_as", "ot_total", "rank", "status"]);
    out.write_record(&header)?;
    for r in ranked {
        let mut row = r.candidate.values();
        let [a, b, c, d, status] = score_fields(&r.score);
        row.extend([a, b, c, d, r.rank.map(|k| k.to_string()).unwrap_or_default(), status]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-trial ablation utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub trial: usize,
    pub utility: f64,
    pub mean_reward: f64,
}

pub fn write_ablation_trials<W: Write>(w: W, rows: &[AblationRow]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variant", "trial", "utility", "mean_reward"])?;
    for r in rows {
        out.write_record([r.variant.clone(), r.trial.to_string(), r.utility.to_string(), r.mean_reward.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `variant, trials, mean, std` with the sample standard deviation.
pub fn write_ablation_summary<W: Write>(w: W, rows: &[(String, Vec<f64>)]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variant", "trials", "mean", "std"])?;
    for (variant, xs) in rows {
        let (mean, std) = mean_std(xs);
        out.write_record([variant.clone(), xs.len().to_string(), mean.to_string(), std.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Mean and sample standard deviation; a single value has zero spread.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn save_checkpoint(path: &Path, params: &ActorCritic) -> Result<(), FormatError> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ActorCritic, FormatError> {
    Ok(decode_checkpoint(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bars(days: usize, t_len: usize) -> DatedBars {
        let days: Vec<Day> = (0..days)
            .map(|d| Day {
                prices: (0..t_len).map(|m| 300.0 + 0.1 * (m + d) as f64).collect(),
                volumes: (0..t_len).map(|m| (m % 7) as f64).collect(),
            })
            .collect();
        DatedBars { dates: (0..days.len()).map(|d| format!("2020-01-{:02}", d + 1)).collect(), bars: BarSeries::new(days).unwrap() }
    }

    #[test]
    fn two_complete_days() {
        let b = bars(2, 300);
        let mut buf = Vec::new();
        write_bars(&mut buf, &b).unwrap();
        let got = read_bars(buf.as_slice(), 300).unwrap();
        assert_eq!(got.bars.bars.n_days(), 2);
        assert_eq!(got.bars.bars.t_len(), 300);
        assert!(got.dropped.is_empty());
    }

    #[test]
    fn short_day_dropped() {
        let b = bars(2, 300);
        let mut buf = Vec::new();
        write_bars(&mut buf, &b).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("2020-01-02,17,")).collect();
        let got = read_bars(kept.join("\n").as_bytes(), 300).unwrap();
        assert_eq!(got.bars.dates, vec!["2020-01-01".to_string()]);
        assert_eq!(got.dropped, vec![("2020-01-02".to_string(), 299)]);
    }

    #[test]
    fn bad_rows_name_their_line() {
        let text = "date,minute_index,mid_price,volume\nd,0,1.0,1\nd,1,-2.0,1\n";
        match read_bars(text.as_bytes(), 2).unwrap_err() {
            FormatError::Row { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("positive"));
            }
            other => panic!("{other}"),
        }
        let text = "date,minute_index,mid_price,volume\nd,zero,1.0,1\n";
        assert!(matches!(read_bars(text.as_bytes(), 2), Err(FormatError::Row { line: 2, .. })));
        let text = "date,minute_index,mid_price,volume\nd,5,1.0,1\n";
        assert!(matches!(read_bars(text.as_bytes(), 2), Err(FormatError::Row { line: 2, .. })));
    }

    #[test]
    fn mean_std_sample() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
