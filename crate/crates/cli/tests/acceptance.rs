//! Acceptance run: one PASS/FAIL line per criterion at the default
//! (acceptance) tolerances, over the four pinned model points and seeds 1–3.
//! Runs without the libtest harness so the lines always print; exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qop_cli::report::Record;
use qop_cli::suites::{self, Model};
use qop_cli::{Report, RunConfig};

struct Point {
    name: &'static str,
    tau_im: f64,
    eta: f64,
    l: f64,
    n: usize,
}

const POINTS: [Point; 4] = [
    Point {
        name: "P1",
        tau_im: 1.0,
        eta: 0.15,
        l: 0.5,
        n: 2,
    },
    Point {
        name: "P2",
        tau_im: 1.0,
        eta: 0.11,
        l: 1.0,
        n: 2,
    },
    Point {
        name: "P3",
        tau_im: 1.0,
        eta: 0.15,
        l: 0.5,
        n: 4,
    },
    Point {
        name: "P4",
        tau_im: 0.9,
        eta: 0.07,
        l: 1.5,
        n: 2,
    },
];

const SEEDS: [u64; 3] = [1, 2, 3];

/// Checks that only apply where `Q_R(u_0)` is required to be invertible.
fn is_q_level(check_id: &str) -> bool {
    matches!(
        check_id,
        "qop.condition"
            | "qop.q_identity_at_u0"
            | "qop.q_left_factorisation"
            | "qop.qq_commute"
            | "qop.tq_commute"
            | "qop.tq_three_term"
            | "qop.qt_three_term"
            | "qop.q_u_laws"
    )
}

#[derive(Default)]
struct Criterion {
    records: usize,
    /// `(point, check) → (seeds, residuals)`, in first-failure order.
    failures: Vec<(String, Vec<String>, Vec<String>)>,
    worst: f64,
    slowest: Duration,
    info: Vec<String>,
}

impl Criterion {
    fn fail(&mut self, key: String, seed: u64, detail: String) {
        match self.failures.iter_mut().find(|(k, _, _)| *k == key) {
            Some((_, seeds, details)) => {
                seeds.push(seed.to_string());
                if !details.contains(&detail) {
                    details.push(detail);
                }
            }
            None => self
                .failures
                .push((key, vec![seed.to_string()], vec![detail])),
        }
    }

    fn absorb(&mut self, point: &str, seed: u64, records: &[Record], elapsed: Duration) {
        self.slowest = self.slowest.max(elapsed);
        for r in records {
            self.records += 1;
            if let Some(x) = r.residual {
                // residuals relative to their bound, so mixed checks compare
                self.worst = self.worst.max(x / r.bound);
            }
            if !r.pass {
                let residual = r.residual.map_or("n/a".to_string(), |x| format!("{x:.2e}"));
                self.fail(
                    format!("{point} {} (bound {:.0e})", r.check_id, r.bound),
                    seed,
                    residual,
                );
            }
        }
    }

    fn line(&self, number: usize, title: &str, budget: Duration) -> bool {
        let in_time = self.slowest <= budget;
        let pass = self.failures.is_empty() && in_time && self.records > 0;
        println!(
            "criterion {number} {title}: {} ({} records, worst residual/bound {:.2e}, slowest run {:.2}s / budget {}s)",
            if pass { "PASS" } else { "FAIL" },
            self.records,
            self.worst,
            self.slowest.as_secs_f64(),
            budget.as_secs()
        );
        if !in_time {
            println!("    over budget");
        }
        for (key, seeds, residuals) in &self.failures {
            println!(
                "    {key}: seeds {} residual {}",
                seeds.join(","),
                residuals.join(" / ")
            );
        }
        for i in &self.info {
            println!("    info: {i}");
        }
        pass
    }
}

fn run(m: &Model, f: fn(&Model, &mut Report)) -> (Vec<Record>, Duration) {
    let start = Instant::now();
    let mut report = Report::new("acceptance");
    f(m, &mut report);
    (report.records, start.elapsed())
}

fn determinism(bin: &Path, dir: &Path) -> Result<(), String> {
    let config = dir.join("p3.json");
    std::fs::write(
        &config,
        r#"{"tau_im": 1.0, "eta": 0.15, "l": 0.5, "n": 4, "seed": 2}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let out = dir.join(format!("spectra_w{workers}.json"));
        let status = Command::new(bin)
            .args(["spectra", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("QOP_WORKERS", workers)
            .output()
            .map_err(|e| e.to_string())?;
        if status.status.code() == Some(2) {
            return Err(format!("run with QOP_WORKERS={workers} exited 2"));
        }
        let json = std::fs::read(&out).map_err(|e| e.to_string())?;
        let csv = std::fs::read(dir.join(format!("spectra_w{workers}_roots.csv")))
            .map_err(|e| e.to_string())?;
        outputs.push((json, csv));
    }
    if outputs[0].0 != outputs[1].0 {
        return Err("JSON reports differ between QOP_WORKERS=1 and 4".into());
    }
    if outputs[0].1 != outputs[1].1 {
        return Err("root CSVs differ between QOP_WORKERS=1 and 4".into());
    }
    Ok(())
}

fn main() {
    let mut theta = Criterion::default();
    let mut representation = Criterion::default();
    let mut sklyanin = Criterion::default();
    let mut lattice = Criterion::default();
    let mut qop = Criterion::default();
    let mut spectra = Criterion::default();

    for p in &POINTS {
        for seed in SEEDS {
            let label = format!("{} seed {seed}", p.name);
            let config = RunConfig::for_model(p.tau_im, p.eta, p.l, p.n, seed);
            let start = Instant::now();
            let model = match Model::build(&config) {
                Ok(m) => m,
                Err(e) => {
                    for c in [
                        &mut theta,
                        &mut representation,
                        &mut sklyanin,
                        &mut lattice,
                        &mut qop,
                        &mut spectra,
                    ] {
                        c.fail(
                            format!("{}: model construction failed", p.name),
                            seed,
                            e.to_string(),
                        );
                    }
                    continue;
                }
            };
            // the Gram quadrature belongs to the Sklyanin-form budget
            let build = start.elapsed();

            let (r, t) = run(&model, suites::theta_checks);
            theta.absorb(p.name, seed, &r, t);
            let (r, t) = run(&model, suites::representation_checks);
            representation.absorb(p.name, seed, &r, t);
            let (r, t) = run(&model, suites::sklyanin_checks);
            sklyanin.absorb(p.name, seed, &r, t + build);
            let (r, t) = run(&model, suites::lattice);
            lattice.absorb(p.name, seed, &r, t);

            let (r, t) = run(&model, suites::qop);
            let q_level_required = matches!(p.name, "P1" | "P2");
            let (q_level, rest): (Vec<Record>, Vec<Record>) =
                r.into_iter().partition(|r| is_q_level(&r.check_id));
            qop.absorb(p.name, seed, &rest, t);
            if q_level_required {
                qop.absorb(p.name, seed, &q_level, Duration::ZERO);
            } else {
                let failing = q_level.iter().filter(|r| !r.pass).count();
                qop.info.push(format!(
                    "{label}: {failing}/{} Q-level checks fail (not required here)",
                    q_level.len()
                ));
            }

            if p.name != "P4" {
                let (r, t) = run(&model, suites::spectra);
                spectra.absorb(p.name, seed, &r, t);
                let skips = r
                    .iter()
                    .filter(|r| r.check_id == "spectra.bethe_equation")
                    .filter_map(|r| r.note.as_deref())
                    .filter(|n| n.contains("singular Bethe solution"))
                    .count();
                if skips > 0 {
                    spectra.info.push(format!(
                        "{label}: {skips} sector(s) with singular Bethe solutions skipped"
                    ));
                }
            }
        }
    }

    let mut all = true;
    all &= theta.line(1, "theta functions", Duration::from_secs(1));
    all &= representation.line(2, "representation", Duration::from_secs(10));
    all &= sklyanin.line(3, "Sklyanin form", Duration::from_secs(120));
    all &= lattice.line(4, "lattice", Duration::from_secs(60));
    all &= qop.line(5, "Q-operators", Duration::from_secs(300));
    all &= spectra.line(6, "spectra", Duration::from_secs(300));

    let dir = tempfile::tempdir().expect("temp dir");
    let det = determinism(Path::new(env!("CARGO_BIN_EXE_qop")), dir.path());
    println!(
        "criterion 7 determinism: {}{}",
        if det.is_ok() { "PASS" } else { "FAIL" },
        det.as_ref().err().map_or(
            " (spectra P3 seed 2, QOP_WORKERS=1 vs 4: JSON and CSV byte-identical)".to_string(),
            |e| format!(" ({e})")
        )
    );
    all &= det.is_ok();

    println!(
        "acceptance: {}",
        if all {
            "all criteria pass"
        } else {
            "some criteria fail"
        }
    );
    if !all {
        std::process::exit(1);
    }
}
