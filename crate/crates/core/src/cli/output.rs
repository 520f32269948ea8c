use std::io::Write;
use std::path::Path;

use clap::ValueEnum;

use super::Failure;
use crate::analytics::{BurstinessReport, LatencyReport, NormalizedRow};
use crate::network::NetworkConfig;
use crate::oracle::{BoundPair, PeriodicSchedule};
use crate::simulator::{BalanceReport, SimMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, Failure> {
    let fail = |e: csv::Error| Failure::io(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn fractions_csv(alpha: &[f64], beta: &[f64], eta: Option<&[f64]>) -> Result<String, Failure> {
    let mut header = vec!["node", "listen_fraction", "transmit_fraction"];
    if eta.is_some() {
        header.push("multiplier");
    }
    let rows = (0..alpha.len()).map(|i| {
        let mut r = vec![i.to_string(), alpha[i].to_string(), beta[i].to_string()];
        if let Some(e) = eta {
            r.push(e[i].to_string());
        }
        r
    });
    table(&header, rows)
}

pub fn bounds_csv(b: &BoundPair) -> Result<String, Failure> {
    let rows = (0..b.lower.alpha.len()).map(|i| {
        vec![
            i.to_string(),
            b.lower.alpha[i].to_string(),
            b.lower.beta[i].to_string(),
            b.upper.alpha[i].to_string(),
            b.upper.beta[i].to_string(),
        ]
    });
    table(&["node", "lower_listen", "lower_transmit", "upper_listen", "upper_transmit"], rows)
}

pub fn sim_csv(m: &SimMetrics) -> Result<String, Failure> {
    let rows = (0..m.per_node_energy_rate.len()).map(|i| {
        vec![
            i.to_string(),
            m.per_node_energy_rate[i].to_string(),
            m.per_node_listen_fraction[i].to_string(),
            m.per_node_transmit_fraction[i].to_string(),
            m.final_multipliers[i].to_string(),
        ]
    });
    table(&["node", "energy_rate", "listen_fraction", "transmit_fraction", "final_multiplier"], rows)
}

pub fn balance_csv(r: &BalanceReport) -> Result<String, Failure> {
    let (a, b) = r.worst_pair.clone().unwrap_or_default();
    table(&["max_violation", "pairs_checked", "worst_from", "worst_to"], [vec![r.max_violation.to_string(), r.pairs_checked.to_string(), a, b]])
}

pub fn burst_csv(r: &BurstinessReport, lat: Option<&LatencyReport>) -> Result<String, Failure> {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    table(
        &["mode", "sigma", "analytic_mean", "empirical_mean", "relative_gap", "samples", "latency_mean", "latency_p99"],
        [vec![
            r.mode.to_string(),
            r.sigma.to_string(),
            r.analytic_mean.to_string(),
            opt(r.empirical_mean),
            opt(r.relative_gap),
            r.samples.to_string(),
            opt(lat.map(|l| l.mean)),
            opt(lat.map(|l| l.p99)),
        ]],
    )
}

pub fn sweep_csv(rows: &[(f64, NormalizedRow)]) -> Result<String, Failure> {
    let mut header: Vec<String> =
        ["h", "sigma", "mode", "replicates", "mean_ratio", "ci_low", "ci_high", "degenerate", "sim_mean_ratio", "sim_ci_low", "sim_ci_high"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let baselines: Vec<String> = rows.first().map(|r| r.1.baseline_gain.keys().cloned().collect()).unwrap_or_default();
    header.extend(baselines.iter().map(|b| format!("gain_over_{b}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let body = rows.iter().map(|(h, r)| {
        let s = r.simulated_ratio;
        let mut v = vec![
            h.to_string(),
            r.sigma.to_string(),
            r.mode.to_string(),
            r.replicates.to_string(),
            r.gibbs_ratio.mean.to_string(),
            r.gibbs_ratio.ci_low.to_string(),
            r.gibbs_ratio.ci_high.to_string(),
            r.gibbs_ratio.degenerate.to_string(),
            s.map(|s| s.mean.to_string()).unwrap_or_default(),
            s.map(|s| s.ci_low.to_string()).unwrap_or_default(),
            s.map(|s| s.ci_high.to_string()).unwrap_or_default(),
        ];
        v.extend(baselines.iter().map(|b| r.baseline_gain[b].to_string()));
        v
    });
    table(&header_refs, body)
}

pub fn schedule_csv(s: &PeriodicSchedule) -> Result<String, Failure> {
    let n = s.assignments.first().map_or(0, Vec::len);
    let mut header = vec!["slot".to_string()];
    header.extend((0..n).map(|i| format!("node{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = s.assignments.iter().enumerate().map(|(k, slot)| {
        let mut r = vec![k.to_string()];
        r.extend(slot.iter().map(|st| st.to_string()));
        r
    });
    table(&header_refs, rows)
}

pub fn nodes_csv(net: &NetworkConfig) -> String {
    let rows = net.nodes.iter().enumerate().map(|(i, p)| {
        vec![
            i.to_string(),
            p.rho.to_string(),
            p.listen_cost.to_string(),
            p.transmit_cost.to_string(),
            net.topology.neighbors(i).iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" "),
        ]
    });
    table(&["node", "rho", "listen_cost", "transmit_cost", "neighbors"], rows).unwrap_or_default()
}
