//! Run telemetry: JSON-lines records emitted while solving, plus the
//! re-verification pass that replays a recorded trace and checks every
//! logged inequality from the raw numbers.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Mutex;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header {
        mode: String,
        n: usize,
        m: usize,
        n_hat: usize,
        m_hat: usize,
        gamma_hat: f64,
        c_energy: f64,
        c_incr: f64,
        c_decr: f64,
        theta: f64,
        lambda_hat: f64,
        boost_budget: f64,
        demand_total: u64,
    },
    Iter {
        t: usize,
        mu_hat: f64,
        centrality: f64,
        delta: f64,
        energy: f64,
        nu_total: f64,
    },
    Boost {
        t: usize,
        l_star: i32,
        nu_set: f64,
        energy_before: f64,
        energy_after: f64,
    },
    Progress {
        t: usize,
        energy_before: f64,
        energy_after: f64,
    },
    Freeze {
        t: usize,
        arcs: usize,
        measure_added: f64,
    },
    Phase {
        index: usize,
        mu_start: f64,
        mu_end: f64,
        progress_steps: usize,
        boosts: usize,
    },
    Fix {
        phase: usize,
        demand_mismatch: f64,
        measure_added: f64,
        mu_before: f64,
        mu_after: f64,
    },
    Certificate {
        t: usize,
        light_violation: bool,
        separated_sets: bool,
        energy: f64,
        flow_threshold_ok: bool,
        theory_fault: bool,
    },
    Fault {
        step: usize,
        law: String,
        detail: String,
    },
    Summary {
        f_star: Option<u64>,
        cut_capacity: Option<u64>,
        matching_size: Option<u64>,
        iterations: usize,
        boosts: usize,
        matcher_calls: usize,
        wall_ms: u64,
        faults: usize,
        empirical_step_constant: Option<f64>,
    },
}

/// Append-only telemetry sink; safe to share across threads.
#[derive(Debug, Default)]
pub struct Telemetry {
    records: Mutex<Vec<Record>>,
}

impl Telemetry {
    pub fn new() -> Self {
        Telemetry::default()
    }

    pub fn push(&self, r: Record) {
        self.records.lock().unwrap().push(r);
    }

    pub fn records(&self) -> Vec<Record> {
        self.records.lock().unwrap().clone()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records.lock().unwrap().iter() {
            writeln!(out, "{}", serde_json::to_string(r).unwrap()).unwrap();
        }
        out
    }
}

/// A full run report: the record stream of one pipeline invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<Record>,
}

impl RunReport {
    pub fn from_jsonl(text: &str) -> crate::error::Result<RunReport> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let r: Record = serde_json::from_str(line).map_err(|e| {
                crate::error::Error::Parse(format!("report line {}: {e}", i + 1))
            })?;
            records.push(r);
        }
        Ok(RunReport { records })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r).unwrap()).unwrap();
        }
        out
    }
}

/// One re-verified law, with the worst margin seen across the trace.
#[derive(Debug, Clone, Serialize)]
pub struct AuditLine {
    pub law: String,
    pub checked: usize,
    pub passed: bool,
    pub worst_margin: f64,
    pub note: String,
}

/// Replay a trace and re-check every inequality it logs. This is
/// independent of the solver: only the recorded numbers are used.
///
/// A trace may contain several runs (one header each, e.g. one per binary
/// search probe); parameters reset at every header.
pub fn audit_report(report: &RunReport) -> Vec<AuditLine> {
    struct Law {
        checked: usize,
        worst: f64,
        note: String,
    }
    impl Law {
        fn new(note: &str) -> Law {
            Law {
                checked: 0,
                worst: f64::NEG_INFINITY,
                note: note.into(),
            }
        }
        fn feed(&mut self, margin: f64) {
            self.checked += 1;
            self.worst = self.worst.max(margin);
        }
        fn line(self, law: &str) -> AuditLine {
            AuditLine {
                law: law.into(),
                checked: self.checked,
                passed: self.checked == 0 || self.worst <= 0.0,
                worst_margin: self.worst,
                note: self.note,
            }
        }
    }

    #[derive(Clone, Copy)]
    struct Params {
        basic: bool,
        m_hat: f64,
        gamma_hat: f64,
        c_energy: f64,
        c_incr: f64,
        c_decr: f64,
        theta: f64,
        lambda_hat: f64,
        boost_budget: f64,
    }

    let rel = 1e-8;
    let mut centering = Law::new("centrality <= gamma_hat * mu_hat");
    let mut sandwich = Law::new("energy within [m mu / c_E, c_E m mu]");
    let mut mu_decrease = Law::new("mu^{t+1} <= (1 - delta^t) mu^t + 1e-9");
    let mut boost_gain = Law::new("boost energy ratio in [1 + c_incr theta^2 nu^(1/3), c_E^2]");
    let mut progress_loss = Law::new("progress energy ratio >= 1/(1 + c_decr theta^2 ln m)");
    let mut phase_mu = Law::new("per-phase mu_end <= lambda_hat * mu_start");
    let mut boost_count = Law::new("boosts per run <= T_s");
    let mut step_floor = Law::new("basic delta >= 1/(41 sqrt(m))");
    let mut c_emp: f64 = 0.0;

    let mut cur: Option<Params> = None;
    let mut prev_iter: Option<(f64, f64)> = None;
    let mut run_boosts = 0usize;
    let mut headers = 0usize;
    let mut fault_count = 0usize;
    let mut first_fault = String::new();

    for r in &report.records {
        match r {
            Record::Header {
                mode,
                m_hat,
                gamma_hat,
                c_energy,
                c_incr,
                c_decr,
                theta,
                lambda_hat,
                boost_budget,
                ..
            } => {
                if let Some(p) = cur {
                    boost_count.feed(run_boosts as f64 - p.boost_budget);
                }
                run_boosts = 0;
                headers += 1;
                prev_iter = None;
                cur = Some(Params {
                    basic: mode == "basic",
                    m_hat: *m_hat as f64,
                    gamma_hat: *gamma_hat,
                    c_energy: *c_energy,
                    c_incr: *c_incr,
                    c_decr: *c_decr,
                    theta: *theta,
                    lambda_hat: *lambda_hat,
                    boost_budget: *boost_budget,
                });
            }
            Record::Iter {
                mu_hat,
                centrality: cent,
                delta,
                energy,
                ..
            } => {
                let Some(p) = cur else { continue };
                centering.feed(cent - p.gamma_hat * mu_hat * (1.0 + rel));
                let lo = p.m_hat * mu_hat / p.c_energy;
                let hi = p.c_energy * p.m_hat * mu_hat;
                sandwich.feed((lo * (1.0 - rel) - energy).max(energy - hi * (1.0 + rel)));
                if let Some((pm, pd)) = prev_iter {
                    if pd > 0.0 {
                        mu_decrease.feed(mu_hat - ((1.0 - pd) * pm + 1e-9));
                    }
                }
                prev_iter = Some((*mu_hat, *delta));
                if p.basic && *delta > 0.0 {
                    let floor = 1.0 / (41.0 * p.m_hat.sqrt());
                    step_floor.feed(floor - delta);
                    c_emp = c_emp.max(1.0 / (delta * p.m_hat.sqrt()));
                }
            }
            Record::Boost {
                nu_set,
                energy_before,
                energy_after,
                ..
            } => {
                let Some(p) = cur else { continue };
                run_boosts += 1;
                let ratio = energy_after / energy_before;
                let need = 1.0 + p.c_incr * p.theta * p.theta * nu_set.cbrt();
                boost_gain.feed(
                    (need * (1.0 - 1e-9) - ratio)
                        .max(ratio - p.c_energy * p.c_energy * (1.0 + rel)),
                );
                prev_iter = None;
            }
            Record::Progress {
                energy_before,
                energy_after,
                ..
            } => {
                let Some(p) = cur else { continue };
                let cap = 1.0 + p.c_decr * p.theta * p.theta * p.m_hat.ln();
                progress_loss.feed(energy_before / cap * (1.0 - rel) - energy_after);
            }
            Record::Phase {
                mu_start, mu_end, ..
            } => {
                let Some(p) = cur else { continue };
                phase_mu.feed(mu_end - p.lambda_hat * mu_start * (1.0 + rel));
                prev_iter = None;
            }
            Record::Fix { .. } | Record::Freeze { .. } | Record::Certificate { .. } => {
                prev_iter = None;
            }
            Record::Fault { law, detail, .. } => {
                fault_count += 1;
                if first_fault.is_empty() {
                    first_fault = format!("[{law}] {detail}");
                }
            }
            Record::Summary { .. } => {
                prev_iter = None;
            }
        }
    }
    if let Some(p) = cur {
        boost_count.feed(run_boosts as f64 - p.boost_budget);
    }

    if p_is_basic_seen(&report.records) {
        step_floor.note = format!("{}; empirical c = {c_emp:.3}", step_floor.note);
    }

    let mut out = Vec::new();
    out.push(AuditLine {
        law: "header-present".into(),
        checked: headers,
        passed: headers > 0,
        worst_margin: if headers > 0 { 0.0 } else { f64::NAN },
        note: format!("{headers} run headers"),
    });
    out.push(centering.line("centering"));
    out.push(sandwich.line("energy-sandwich"));
    out.push(mu_decrease.line("mu-decrease"));
    out.push(boost_gain.line("boost-energy-gain"));
    out.push(progress_loss.line("progress-energy-loss"));
    out.push(phase_mu.line("phase-mu-reduction"));
    out.push(boost_count.line("boost-count"));
    out.push(step_floor.line("step-size-floor"));
    out.push(AuditLine {
        law: "no-recorded-faults".into(),
        checked: fault_count,
        passed: fault_count == 0,
        worst_margin: fault_count as f64,
        note: if fault_count == 0 {
            "clean".into()
        } else {
            format!("first: {first_fault}")
        },
    });
    out
}

fn p_is_basic_seen(records: &[Record]) -> bool {
    records
        .iter()
        .any(|r| matches!(r, Record::Header { mode, .. } if mode == "basic"))
}

/// Render audit lines as a fixed-width pass/fail table.
pub fn format_audit(lines: &[AuditLine]) -> String {
    let mut s = String::new();
    for l in lines {
        writeln!(
            s,
            "{:<24} {:>6}  {}  margin {:+.3e}  {}",
            l.law,
            l.checked,
            if l.passed { "PASS" } else { "FAIL" },
            l.worst_margin,
            l.note
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Record {
        Record::Header {
            mode: "basic".into(),
            n: 2,
            m: 1,
            n_hat: 3,
            m_hat: 5,
            gamma_hat: 1.0 / 400.0,
            c_energy: 64.0,
            c_incr: 1.0 / 36.0,
            c_decr: 8.0,
            theta: 0.9,
            lambda_hat: 0.8,
            boost_budget: 10.0,
            demand_total: 2,
        }
    }

    #[test]
    fn clean_trace_passes() {
        let report = RunReport {
            records: vec![
                header(),
                Record::Iter {
                    t: 0,
                    mu_hat: 1.0,
                    centrality: 0.0,
                    delta: 0.1,
                    energy: 5.0,
                    nu_total: 5.0,
                },
                Record::Iter {
                    t: 1,
                    mu_hat: 0.9,
                    centrality: 0.002,
                    delta: 0.1,
                    energy: 4.5,
                    nu_total: 5.0,
                },
            ],
        };
        let audit = audit_report(&report);
        assert!(audit.iter().all(|l| l.passed), "{audit:#?}");
    }

    #[test]
    fn tampered_trace_flagged() {
        let report = RunReport {
            records: vec![
                header(),
                Record::Iter {
                    t: 0,
                    mu_hat: 1.0,
                    centrality: 0.5, // way above gamma_hat * mu
                    delta: 0.1,
                    energy: 5.0,
                    nu_total: 5.0,
                },
            ],
        };
        let audit = audit_report(&report);
        let centering = audit.iter().find(|l| l.law == "centering").unwrap();
        assert!(!centering.passed);
    }

    #[test]
    fn jsonl_roundtrip() {
        let report = RunReport {
            records: vec![
                header(),
                Record::Summary {
                    f_star: Some(3),
                    cut_capacity: Some(3),
                    matching_size: None,
                    iterations: 12,
                    boosts: 0,
                    matcher_calls: 3,
                    wall_ms: 1,
                    faults: 0,
                    empirical_step_constant: Some(12.5),
                },
            ],
        };
        let text = report.to_jsonl();
        let back = RunReport::from_jsonl(&text).unwrap();
        assert_eq!(back.records, report.records);
    }

    #[test]
    fn missing_header_fails_audit() {
        let report = RunReport { records: vec![] };
        let audit = audit_report(&report);
        assert!(!audit[0].passed);
    }
}
