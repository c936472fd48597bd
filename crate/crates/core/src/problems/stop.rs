//! Sequential transfer instances: one target task plus `K` source tasks
//! whose optima sit at a sampled similarity to the target optimum.

use std::fmt::Write as _;

use rand::Rng;

use super::{Family, Problem};
use crate::error::{Error, Result};
use crate::rng;

/// Number of predefined suite entries.
pub const SUITE_SIZE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Sources share the target family.
    IntraFamily,
    /// Each source draws a family other than the target's.
    InterFamily,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::IntraFamily => "intra_family",
            Scenario::InterFamily => "inter_family",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::IntraFamily => "Ta",
            Scenario::InterFamily => "Te",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "intra_family" | "Ta" | "intra" => Ok(Scenario::IntraFamily),
            "inter_family" | "Te" | "inter" => Ok(Scenario::InterFamily),
            other => Err(Error::Parameter(format!(
                "unknown transfer scenario {other:?}"
            ))),
        }
    }
}

/// Similarity densities on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dist {
    /// Point mass at 1.
    H1h,
    /// Density proportional to `max(0, 8s - 4)`.
    H2h,
    /// Uniform.
    H1m,
    /// Density `2s`.
    H2m,
    /// Density `2 - 2s`.
    H3m,
    /// Triangular, peak at 0.5.
    H4m,
    /// Point mass at 0.
    H1l,
    /// Density proportional to `max(0, 4 - 8s)`.
    H2l,
}

impl Dist {
    pub const ALL: [Dist; 8] = [
        Dist::H1h,
        Dist::H2h,
        Dist::H1m,
        Dist::H2m,
        Dist::H3m,
        Dist::H4m,
        Dist::H1l,
        Dist::H2l,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dist::H1h => "h1h",
            Dist::H2h => "h2h",
            Dist::H1m => "h1m",
            Dist::H2m => "h2m",
            Dist::H3m => "h3m",
            Dist::H4m => "h4m",
            Dist::H1l => "h1l",
            Dist::H2l => "h2l",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Dist::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown similarity distribution {s:?}")))
    }

    /// Inverse CDF at `u ∈ [0, 1)`.
    pub fn quantile(self, u: f64) -> f64 {
        match self {
            Dist::H1h => 1.0,
            Dist::H1l => 0.0,
            Dist::H1m => u,
            Dist::H2m => u.sqrt(),
            Dist::H3m => 1.0 - (1.0 - u).sqrt(),
            Dist::H4m => {
                if u < 0.5 {
                    (u / 2.0).sqrt()
                } else {
                    1.0 - ((1.0 - u) / 2.0).sqrt()
                }
            }
            Dist::H2h => 0.5 + 0.5 * u.sqrt(),
            Dist::H2l => 0.5 - 0.5 * u.sqrt(),
        }
    }
}

pub fn sample_similarity<R: Rng + ?Sized>(dist: Dist, rng: &mut R) -> f64 {
    match dist {
        Dist::H1h => 1.0,
        Dist::H1l => 0.0,
        _ => dist.quantile(rng.gen::<f64>()),
    }
}

/// The configuration tuple of a transfer instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StopSpec {
    pub family: Family,
    pub scenario: Scenario,
    pub dist: Dist,
    pub dim: usize,
    pub tasks: usize,
}

impl StopSpec {
    /// `Family-Scenario-dist-d-K-GA`.
    pub fn label(&self) -> String {
        format!(
            "{}-{}-{}-{}-{}-GA",
            self.family.label(),
            self.scenario.label(),
            self.dist.name(),
            self.dim,
            self.tasks
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        if self.tasks == 0 {
            return Err(Error::Parameter(
                "at least one source task is required".into(),
            ));
        }
        Ok(())
    }
}

/// Suite entries `STOP1` to `STOP12`; `id` is 1-based.
pub fn stop_suite(id: usize) -> Result<StopSpec> {
    use Dist::*;
    use Family::*;
    use Scenario::*;
    let (family, scenario, dist, dim) = match id {
        1 => (Sphere, IntraFamily, H1h, 50),
        2 => (Ellipsoid, InterFamily, H2h, 25),
        3 => (Schwefel22, IntraFamily, H2h, 30),
        4 => (QuarticNoise, InterFamily, H1h, 50),
        5 => (Ackley, IntraFamily, H1m, 25),
        6 => (Rastrigin, InterFamily, H2m, 50),
        7 => (Griewank, IntraFamily, H3m, 25),
        8 => (Levy, InterFamily, H4m, 30),
        9 => (Sphere, IntraFamily, H1l, 25),
        10 => (Rastrigin, InterFamily, H2l, 30),
        11 => (Ackley, IntraFamily, H2l, 50),
        12 => (Ellipsoid, InterFamily, H1l, 50),
        _ => {
            return Err(Error::Parameter(format!(
                "suite id must be 1..=12, got {id}"
            )))
        }
    };
    Ok(StopSpec {
        family,
        scenario,
        dist,
        dim,
        tasks: 10,
    })
}

impl StopSpec {
    /// Accepts `STOP<n>` in any case.
    pub fn parse_suite(s: &str) -> Result<Self> {
        let upper = s.to_ascii_uppercase();
        let n = upper
            .strip_prefix("STOP")
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| Error::Parameter(format!("invalid suite id {s:?}")))?;
        stop_suite(n)
    }
}

/// A generated transfer instance.
#[derive(Clone, Debug, PartialEq)]
pub struct StopInstance {
    pub spec: StopSpec,
    /// `STOP<n>` when generated from the suite table.
    pub suite: Option<String>,
    pub seed: u64,
    pub target: Problem,
    pub sources: Vec<Problem>,
    pub similarities: Vec<f64>,
}

pub fn make_stop_instance(spec: StopSpec, seed: u64) -> Result<StopInstance> {
    spec.validate()?;
    let mut r = rng::keyed(seed, &[0x5709]);
    let (lo, hi) = spec.family.bounds();
    let target_shift: Vec<f64> = (0..spec.dim).map(|_| r.gen_range(lo..=hi)).collect();
    let target = Problem::new(spec.family, target_shift)?;
    let others: Vec<Family> = Family::ALL
        .into_iter()
        .filter(|f| *f != spec.family)
        .collect();
    let mut sources = Vec::with_capacity(spec.tasks);
    let mut similarities = Vec::with_capacity(spec.tasks);
    for _ in 0..spec.tasks {
        let s = sample_similarity(spec.dist, &mut r);
        let family = match spec.scenario {
            Scenario::IntraFamily => spec.family,
            Scenario::InterFamily => others[r.gen_range(0..others.len())],
        };
        let optimum: Vec<f64> = target
            .optimum_common()
            .iter()
            .map(|&o| (s * o + (1.0 - s) * r.gen::<f64>()).clamp(0.0, 1.0))
            .collect();
        sources.push(Problem::from_common(family, &optimum)?);
        similarities.push(s);
    }
    Ok(StopInstance {
        spec,
        suite: None,
        seed,
        target,
        sources,
        similarities,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_vec(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parameter(format!("bad number {t:?} in descriptor")))
        })
        .collect()
}

impl StopInstance {
    pub fn with_suite(mut self, name: impl Into<String>) -> Self {
        self.suite = Some(name.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Key-value text with every optimum in common coordinates; parsing it
    /// reproduces the instance exactly.
    pub fn descriptor(&self) -> String {
        let mut s = String::new();
        let sp = &self.spec;
        if let Some(id) = &self.suite {
            writeln!(s, "suite={id}").expect("write to String");
        }
        for (k, v) in [
            ("family", sp.family.name().to_string()),
            ("scenario", sp.scenario.name().to_string()),
            ("dist", sp.dist.name().to_string()),
            ("d", sp.dim.to_string()),
            ("K", sp.tasks.to_string()),
            ("seed", self.seed.to_string()),
            ("target", join(self.target.optimum_common())),
        ] {
            writeln!(s, "{k}={v}").expect("write to String");
        }
        for (k, (p, sim)) in self.sources.iter().zip(&self.similarities).enumerate() {
            writeln!(s, "source.{k}.family={}", p.family().name()).expect("write to String");
            writeln!(s, "source.{k}.similarity={sim}").expect("write to String");
            writeln!(s, "source.{k}.optimum={}", join(p.optimum_common()))
                .expect("write to String");
        }
        s
    }

    pub fn descriptor_hash(&self) -> u64 {
        crate::archive::fnv1a64(self.descriptor().as_bytes())
    }

    pub fn parse_descriptor(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("descriptor line {} lacks '='", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Parameter(format!("descriptor lacks {k:?}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Parameter(format!("descriptor field {k:?} is not an integer")))
        };
        let spec = StopSpec {
            family: Family::parse(get("family")?)?,
            scenario: Scenario::parse(get("scenario")?)?,
            dist: Dist::parse(get("dist")?)?,
            dim: num("d")?,
            tasks: num("K")?,
        };
        spec.validate()?;
        let seed = get("seed")?
            .parse()
            .map_err(|_| Error::Parameter("descriptor seed is not an integer".into()))?;
        let target = Problem::from_common(spec.family, &parse_vec(get("target")?)?)?;
        let mut sources = Vec::with_capacity(spec.tasks);
        let mut similarities = Vec::with_capacity(spec.tasks);
        for k in 0..spec.tasks {
            let fam = Family::parse(get(&format!("source.{k}.family"))?)?;
            let sim: f64 = get(&format!("source.{k}.similarity"))?
                .parse()
                .map_err(|_| Error::Parameter(format!("source {k} similarity is not a number")))?;
            let opt = parse_vec(get(&format!("source.{k}.optimum"))?)?;
            sources.push(Problem::from_common(fam, &opt)?);
            similarities.push(sim);
        }
        let all_dims = std::iter::once(&target).chain(&sources);
        if all_dims.into_iter().any(|p| p.dim() != spec.dim) {
            return Err(Error::Parameter(
                "descriptor optimum length differs from d".into(),
            ));
        }
        Ok(StopInstance {
            spec,
            suite: kv.get("suite").cloned(),
            seed,
            target,
            sources,
            similarities,
        })
    }
}
