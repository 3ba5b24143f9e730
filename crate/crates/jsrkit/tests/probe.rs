use jsrkit::cli::FamilySpec;
use jsrkit::linalg::spectral_radius;
use jsrkit::multi::{certify_jsr, CertifyConfig, CertifyOutcome};
use jsrkit::norm::{build_barabanov, certify, BuildOutcome, NormKind};
use jsrkit::positive::{monotone_certify, random_nonnegative_family};
use jsrkit::{Matrix, MatrixFamily};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::path::Path;
use std::time::Instant;

fn load(n: usize) -> MatrixFamily {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("examples/ex{n}.json"));
    FamilySpec::from_path(&path).unwrap().family().unwrap()
}

fn describe(tag: &str, fam: &MatrixFamily) {
    let t = Instant::now();
    match certify_jsr(fam, &CertifyConfig::default()) {
        Ok(CertifyOutcome::Certified { body, raw_generators, .. }) => {
            println!(
                "{tag}: certified nu={:.12} words={:?} gens={} raw={} dead={} mu={:?} in {:.2?}",
                body.nu,
                body.candidate_words,
                body.generators.len(),
                raw_generators,
                body.dead.len(),
                body.mu,
                t.elapsed()
            );
        }
        Ok(CertifyOutcome::Budget(p)) => println!(
            "{tag}: BUDGET iters={} alive={} nu in [{}, {}] after {:.2?}",
            p.iterations, p.alive, p.nu_lower, p.nu_upper, t.elapsed()
        ),
        Ok(CertifyOutcome::NotFound { reason }) => println!("{tag}: NOTFOUND {reason}"),
        Err(e) => println!("{tag}: ERR {e}"),
    }
}

#[test]
fn probe_ex4_ex5() {
    describe("ex4", &load(4));
    describe("ex5", &load(5));
}

#[test]
fn probe_ex4_facets() {
    use jsrkit::polytope::{run_algorithm1, RunOutcome};
    use jsrkit::search::enumerate_candidates;
    let fam = load(4);
    let cand = enumerate_candidates(&fam, 6, 1).unwrap().remove(0);
    println!("candidate {:?} nu={:.6}", cand.word, cand.nu);
    for facets in [32usize, 64, 128, 256] {
        for max_iter in [12usize, 25, 50] {
            let cfg = jsrkit::polytope::AlgorithmConfig {
                facets_m: facets,
                max_iter,
                ..Default::default()
            };
            let t = Instant::now();
            match run_algorithm1(&fam, &cand, &cfg) {
                Ok(RunOutcome::Halted(b)) => {
                    let pruned = b.prune_redundant(1e-8).unwrap();
                    println!(
                        "M={facets} iter<={max_iter}: HALT gens={} pruned={} iters={} {:.2?}",
                        b.generators.len(),
                        pruned.generators.len(),
                        b.iterations,
                        t.elapsed()
                    );
                    break;
                }
                Ok(RunOutcome::Budget(p)) => println!(
                    "M={facets} iter<={max_iter}: budget alive={} nodes={} {:.2?}",
                    p.alive, p.total_nodes, t.elapsed()
                ),
                Ok(RunOutcome::NotDominantEvidence(e)) => {
                    println!("M={facets}: evidence {:?}", e.word);
                    break;
                }
                Err(e) => {
                    println!("M={facets}: err {e}");
                    break;
                }
            }
        }
    }
}

#[test]
fn probe_eq15() {
    let tau = 0.05_f64;
    let s = 3.0_f64.sqrt() / 2.0;
    let a1 = Matrix::from_rows(&[
        &[-0.5, -s, 0.0, 0.0],
        &[s, -0.5, 0.0, 0.0],
        &[0.0, 0.0, 0.5, 0.0],
        &[0.0, 0.0, 0.0, 0.25],
    ])
    .unwrap();
    let b = [tau, 1.0 - 4.0 * tau * tau, tau, tau];
    let rows: Vec<Vec<f64>> = b.iter().map(|bi| b.iter().map(|bj| bi * bj).collect()).collect();
    let a2 = Matrix::from_rows(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>()).unwrap();
    println!(
        "rho(A1)={:.6} rho(A2)={:.6} |b|^2={:.6}",
        spectral_radius(&a1, 1e-12).unwrap(),
        spectral_radius(&a2, 1e-12).unwrap(),
        b.iter().map(|x| x * x).sum::<f64>()
    );
    let fam = MatrixFamily::new(vec![a1, a2]).unwrap();
    describe("eq15", &fam);
}

#[test]
fn probe_positive_d100() {
    for seed in 1..=3u64 {
        let fam = random_nonnegative_family(100, 2, 0.0, seed);
        let t = Instant::now();
        match monotone_certify(&fam, &CertifyConfig::default()) {
            Ok(CertifyOutcome::Certified { body, .. }) => println!(
                "d100 seed {seed}: gens={} words={:?} in {:.2?}",
                body.generators.len(),
                body.candidate_words,
                t.elapsed()
            ),
            other => println!("d100 seed {seed}: {other:?} in {:.2?}", t.elapsed()),
        }
    }
}

#[test]
fn probe_positive_d1000() {
    let fam = random_nonnegative_family(1000, 2, 0.0, 1);
    let t = Instant::now();
    match monotone_certify(&fam, &CertifyConfig::default()) {
        Ok(CertifyOutcome::Certified { body, .. }) => println!(
            "d1000: gens={} words={:?} in {:.2?}",
            body.generators.len(),
            body.candidate_words,
            t.elapsed()
        ),
        other => println!("d1000: {other:?} in {:.2?}", t.elapsed()),
    }
}

fn random_spec_pair(dim: usize, seed: u64) -> MatrixFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = (0..2)
        .map(|_| {
            let m = nalgebra::DMatrix::from_fn(dim, dim, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g
            });
            let m = Matrix::from_dmatrix(m).unwrap();
            let rho = spectral_radius(&m, 1e-12).unwrap();
            m.scaled(1.0 / rho).unwrap()
        })
        .collect();
    MatrixFamily::new(mats).unwrap()
}

#[test]
fn probe_even_dims() {
    for dim in [2usize, 4, 6, 8, 10] {
        let mut halted = 0;
        let mut times = Vec::new();
        for trial in 0..20u64 {
            let fam = random_spec_pair(dim, 1000 * dim as u64 + trial);
            let t = Instant::now();
            let out = certify_jsr(&fam, &CertifyConfig::default());
            let dt = t.elapsed();
            times.push(dt);
            match out {
                Ok(CertifyOutcome::Certified { .. }) => halted += 1,
                Ok(CertifyOutcome::Budget(p)) => {
                    println!("  d{dim} t{trial}: budget alive={} {:.2?}", p.alive, dt)
                }
                Ok(CertifyOutcome::NotFound { reason }) => {
                    println!("  d{dim} t{trial}: notfound {reason} {:.2?}", dt)
                }
                Err(e) => println!("  d{dim} t{trial}: err {e} {:.2?}", dt),
            }
        }
        times.sort();
        println!(
            "d={dim}: halted {halted}/20, median {:.2?}, max {:.2?}",
            times[times.len() / 2],
            times[times.len() - 1]
        );
    }
}

#[test]
fn probe_norm_residuals() {
    for n in 1..=3usize {
        let fam = load(n);
        let t = Instant::now();
        match build_barabanov(&fam, &CertifyConfig::default()).unwrap() {
            BuildOutcome::Built(norm) => {
                let cert = certify(&norm, &fam, 1000, 1).unwrap();
                let kind = match &norm.kind {
                    NormKind::PiecewiseLinear(v) => format!("PL({})", v.len()),
                    NormKind::PiecewiseQuadratic(p) => format!("PQ({})", p.len()),
                    NormKind::MonotoneLinear(v) => format!("ML({})", v.len()),
                };
                println!(
                    "ex{n}: {kind} rho={:.10} residual={:.3e} unique={} ratpi={} src_gens={} in {:.2?}",
                    norm.rho,
                    cert.max_residual,
                    norm.flags.unique,
                    norm.flags.rational_mod_pi,
                    norm.source_body.generators.len(),
                    t.elapsed()
                );
            }
            other => println!("ex{n}: {other:?}"),
        }
    }
}
