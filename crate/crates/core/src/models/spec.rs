use serde::{Deserialize, Serialize};

use super::cluster::ClusterModel;
use super::laws::{Delay, InterarrivalLaw, SizeLaw};
use crate::error::{invalid, Error, Result};
use crate::kv::{split_call, KvFile};

pub const DEFAULT_SIZE_BIAS_POOL: usize = 4096;
pub const DEFAULT_RUNAWAY_CAP: usize = 100_000_000;
pub const DEFAULT_GUARD_DELTA: f64 = 1e-4;

/// Full description of a delayed renewal cluster process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    /// Law of the first epoch.
    pub delay: Delay,
    /// Law of the i.i.d. interarrivals after the first epoch.
    pub interarrival: InterarrivalLaw,
    /// Cluster law attached to every ordinary arrival.
    pub cluster: ClusterModel,
    /// Cluster law of the first (delay) arrival.
    pub delay_cluster: ClusterModel,
    /// Whether parent epochs are themselves points of the cluster process.
    pub include_parents: bool,
    /// Candidate pool for size-biasing unbounded interarrival laws; 0 disables the fallback.
    pub size_bias_pool: usize,
    pub runaway_cap: usize,
    /// Tail mass of the cluster radius allowed beyond the guard band.
    pub guard_delta: f64,
}

impl ProcessSpec {
    pub fn new(interarrival: InterarrivalLaw, cluster: ClusterModel) -> Self {
        Self {
            delay: Delay::Zero,
            interarrival,
            cluster,
            delay_cluster: ClusterModel::Empty,
            include_parents: false,
            size_bias_pool: DEFAULT_SIZE_BIAS_POOL,
            runaway_cap: DEFAULT_RUNAWAY_CAP,
            guard_delta: DEFAULT_GUARD_DELTA,
        }
    }

    pub fn with_parents(mut self, include: bool) -> Self {
        self.include_parents = include;
        self
    }

    pub fn with_delay(mut self, delay: Delay, delay_cluster: ClusterModel) -> Self {
        self.delay = delay;
        self.delay_cluster = delay_cluster;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.interarrival.validate()?;
        if let Delay::Law(l) = &self.delay {
            l.validate()?;
        }
        self.cluster.validate()?;
        self.delay_cluster.validate()?;
        let mu = self.interarrival.mean();
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid(format!(
                "interarrival mean {mu} must be in (0, inf)"
            )));
        }
        if !(self.guard_delta > 0.0 && self.guard_delta < 1.0) {
            return Err(invalid("guard delta must lie in (0, 1)"));
        }
        if self.runaway_cap == 0 {
            return Err(invalid("runaway cap must be positive"));
        }
        Ok(())
    }

    /// Mean interarrival `mu`.
    pub fn mean_interarrival(&self) -> f64 {
        self.interarrival.mean()
    }

    pub fn mean_cluster_size(&self) -> Option<f64> {
        self.cluster.mean_size(&self.interarrival)
    }

    pub fn mean_size_radius(&self) -> Option<f64> {
        self.cluster.mean_size_radius(&self.interarrival)
    }

    pub fn mean_size_interarrival(&self) -> Option<f64> {
        self.cluster.mean_size_interarrival(&self.interarrival)
    }

    /// Long-run point intensity `(E[L] + parents) / mu`.
    pub fn intensity(&self) -> Result<f64> {
        let l = self
            .mean_cluster_size()
            .ok_or(Error::AccessorUnavailable("mean cluster size"))?;
        let parents = if self.include_parents { 1.0 } else { 0.0 };
        Ok((l + parents) / self.mean_interarrival())
    }

    /// Parameters when this spec is a Bartlett-Lewis process.
    pub fn as_bartlett_lewis(&self) -> Option<BartlettLewis<'_>> {
        match (
            &self.interarrival,
            &self.cluster,
            &self.delay,
            &self.delay_cluster,
        ) {
            (
                InterarrivalLaw::Exponential { rate },
                ClusterModel::BartlettLewis { size, step },
                Delay::Zero,
                ClusterModel::Empty,
            ) if self.include_parents => Some(BartlettLewis {
                rate: *rate,
                size,
                step,
            }),
            (
                InterarrivalLaw::Exponential { rate },
                ClusterModel::Empty,
                Delay::Zero,
                ClusterModel::Empty,
            ) if self.include_parents => Some(BartlettLewis {
                rate: *rate,
                size: &SizeLaw::Fixed { n: 0 },
                step: &POINT_STEP,
            }),
            _ => None,
        }
    }

    /// Reads the process keys from a config file, consuming them.
    pub fn from_kv(kv: &mut KvFile) -> Result<Self> {
        let interarrival = law_from_keys(kv, "interarrival")?.ok_or_else(|| Error::Config {
            line: 0,
            msg: "missing required key `interarrival.kind`".into(),
        })?;
        let delay = match law_from_keys(kv, "delay")? {
            None => Delay::Zero,
            Some(l) => Delay::Law(l),
        };
        let cluster = cluster_from_keys(kv)?;
        let delay_cluster = match kv.take_str("delay_cluster.kind") {
            None => ClusterModel::Empty,
            Some((_, v)) if v == "empty" => ClusterModel::Empty,
            Some((_, v)) if v == "same" => cluster.clone(),
            Some((line, v)) => {
                return Err(Error::Config {
                    line,
                    msg: format!("delay_cluster.kind must be `empty` or `same`, found `{v}`"),
                })
            }
        };
        let spec = ProcessSpec {
            delay,
            interarrival,
            cluster,
            delay_cluster,
            include_parents: kv.take_or("include_parents", false)?,
            size_bias_pool: kv.take_or("size_bias.pool", DEFAULT_SIZE_BIAS_POOL)?,
            runaway_cap: kv.take_or("runaway_cap", DEFAULT_RUNAWAY_CAP)?,
            guard_delta: kv.take_or("guard.delta", DEFAULT_GUARD_DELTA)?,
        };
        spec.validate().map_err(|e| Error::Config {
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(spec)
    }

    /// Inverse of [`ProcessSpec::from_kv`], as `(key, value)` lines.
    pub fn to_kv_lines(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        law_to_keys(&mut out, "interarrival", &self.interarrival);
        if let Delay::Law(l) = &self.delay {
            law_to_keys(&mut out, "delay", l);
        } else {
            out.push(("delay.kind".into(), "zero".into()));
        }
        match &self.cluster {
            ClusterModel::Empty => out.push(("cluster.kind".into(), "empty".into())),
            ClusterModel::Fixed { size, offset } => {
                out.push(("cluster.kind".into(), "fixed".into()));
                out.push(("cluster.size".into(), size.to_string()));
                out.push(("cluster.offset".into(), offset.to_string()));
            }
            ClusterModel::BartlettLewis { size, step } => {
                out.push(("cluster.kind".into(), "bartlett_lewis".into()));
                out.push(("cluster.size_law".into(), size_expr(size)));
                out.push(("cluster.step".into(), law_expr(step)));
            }
            ClusterModel::Threshold {
                threshold,
                above,
                below,
                jitter_sd,
            } => {
                out.push(("cluster.kind".into(), "threshold".into()));
                out.push(("cluster.threshold".into(), threshold.to_string()));
                out.push(("cluster.above".into(), size_expr(above)));
                out.push(("cluster.below".into(), size_expr(below)));
                out.push(("cluster.jitter_sd".into(), jitter_sd.to_string()));
            }
        }
        let dc = if self.delay_cluster == ClusterModel::Empty {
            "empty"
        } else {
            "same"
        };
        out.push(("delay_cluster.kind".into(), dc.into()));
        out.push(("include_parents".into(), self.include_parents.to_string()));
        out.push(("size_bias.pool".into(), self.size_bias_pool.to_string()));
        out.push(("runaway_cap".into(), self.runaway_cap.to_string()));
        out.push(("guard.delta".into(), self.guard_delta.to_string()));
        out
    }
}

static POINT_STEP: InterarrivalLaw = InterarrivalLaw::Exponential { rate: 1.0 };

/// Bartlett-Lewis view of a spec: Poisson parents of intensity `rate`, i.i.d. cluster
/// sizes and i.i.d. nonnegative steps.
#[derive(Clone, Copy, Debug)]
pub struct BartlettLewis<'a> {
    pub rate: f64,
    pub size: &'a SizeLaw,
    pub step: &'a InterarrivalLaw,
}

/// Bartlett-Lewis process: Exponential(`rate`) parent gaps, parents included, cluster
/// offsets are cumulative sums of `step` draws, cluster size from `size`.
pub fn bartlett_lewis_preset(
    rate: f64,
    size: SizeLaw,
    step: InterarrivalLaw,
) -> Result<ProcessSpec> {
    let spec = ProcessSpec::new(
        InterarrivalLaw::exponential(rate),
        ClusterModel::BartlettLewis { size, step },
    )
    .with_parents(true);
    spec.validate()?;
    Ok(spec)
}

/// Uniform(0, 5) interarrivals, no delay cluster, size Poisson(0.5) after a gap longer
/// than 1 and Poisson(5) otherwise, offsets `x + N(0, 1)`.
pub fn example_two_preset() -> ProcessSpec {
    ProcessSpec::new(InterarrivalLaw::uniform(0.0, 5.0), example_two_cluster())
}

pub fn example_two_cluster() -> ClusterModel {
    ClusterModel::Threshold {
        threshold: 1.0,
        above: SizeLaw::Poisson { mean: 0.5 },
        below: SizeLaw::Poisson { mean: 5.0 },
        jitter_sd: 1.0,
    }
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn law_from_keys(kv: &mut KvFile, prefix: &str) -> Result<Option<InterarrivalLaw>> {
    let Some((line, kind)) = kv.take_str(&format!("{prefix}.kind")) else {
        return Ok(None);
    };
    let key = |k: &str| format!("{prefix}.{k}");
    let law = match kind.as_str() {
        "zero" if prefix == "delay" => return Ok(None),
        "exponential" => InterarrivalLaw::exponential(kv.require(&key("rate"))?),
        "uniform" => InterarrivalLaw::uniform(kv.require(&key("lo"))?, kv.require(&key("hi"))?),
        "gamma" => InterarrivalLaw::gamma(kv.require(&key("shape"))?, kv.require(&key("scale"))?),
        "mixture" => {
            let (line, comps) = kv.require_str(&key("components"))?;
            let components = comps
                .split(';')
                .map(|c| {
                    parse_weighted(c)
                        .ok_or_else(|| config_err(line, format!("bad mixture component `{c}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            InterarrivalLaw::Mixture { components }
        }
        other => return Err(config_err(line, format!("unknown {prefix}.kind `{other}`"))),
    };
    law.validate()
        .map_err(|e| config_err(line, e.to_string()))?;
    Ok(Some(law))
}

fn parse_weighted(s: &str) -> Option<(f64, InterarrivalLaw)> {
    let (w, law) = s.split_once(':')?;
    Some((w.trim().parse().ok()?, parse_law_expr(law)?))
}

/// Parses `exponential(rate)`, `uniform(lo,hi)`, `gamma(shape,scale)` or
/// `mixture(w:law; w:law; ...)`.
pub fn parse_law_expr(s: &str) -> Option<InterarrivalLaw> {
    let (name, args) = split_call(s)?;
    let num = |i: usize| args.get(i).and_then(|a| a.parse::<f64>().ok());
    match (name, args.len()) {
        ("exponential", 1) => Some(InterarrivalLaw::exponential(num(0)?)),
        ("uniform", 2) => Some(InterarrivalLaw::uniform(num(0)?, num(1)?)),
        ("gamma", 2) => Some(InterarrivalLaw::gamma(num(0)?, num(1)?)),
        ("mixture", n) if n > 0 => Some(InterarrivalLaw::Mixture {
            components: args
                .iter()
                .map(|a| parse_weighted(a))
                .collect::<Option<_>>()?,
        }),
        _ => None,
    }
}

pub fn law_expr(law: &InterarrivalLaw) -> String {
    match law {
        InterarrivalLaw::Exponential { rate } => format!("exponential({rate})"),
        InterarrivalLaw::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
        InterarrivalLaw::Gamma { shape, scale } => format!("gamma({shape},{scale})"),
        InterarrivalLaw::Mixture { components } => {
            let parts: Vec<String> = components
                .iter()
                .map(|(w, l)| format!("{w}:{}", law_expr(l)))
                .collect();
            format!("mixture({})", parts.join(";"))
        }
    }
}

fn law_to_keys(out: &mut Vec<(String, String)>, prefix: &str, law: &InterarrivalLaw) {
    let mut push = |k: &str, v: String| out.push((format!("{prefix}.{k}"), v));
    match law {
        InterarrivalLaw::Exponential { rate } => {
            push("kind", "exponential".into());
            push("rate", rate.to_string());
        }
        InterarrivalLaw::Uniform { lo, hi } => {
            push("kind", "uniform".into());
            push("lo", lo.to_string());
            push("hi", hi.to_string());
        }
        InterarrivalLaw::Gamma { shape, scale } => {
            push("kind", "gamma".into());
            push("shape", shape.to_string());
            push("scale", scale.to_string());
        }
        InterarrivalLaw::Mixture { components } => {
            push("kind", "mixture".into());
            let parts: Vec<String> = components
                .iter()
                .map(|(w, l)| format!("{w}:{}", law_expr(l)))
                .collect();
            push("components", parts.join(";"));
        }
    }
}

/// Parses `poisson(mean)`, `fixed(n)` or `geometric(p)`.
pub fn parse_size_expr(s: &str) -> Option<SizeLaw> {
    let (name, args) = split_call(s)?;
    match (name, args.as_slice()) {
        ("poisson", [m]) => Some(SizeLaw::Poisson {
            mean: m.parse().ok()?,
        }),
        ("fixed", [n]) => Some(SizeLaw::Fixed { n: n.parse().ok()? }),
        ("geometric", [p]) => Some(SizeLaw::Geometric { p: p.parse().ok()? }),
        _ => None,
    }
}

pub fn size_expr(size: &SizeLaw) -> String {
    match size {
        SizeLaw::Fixed { n } => format!("fixed({n})"),
        SizeLaw::Poisson { mean } => format!("poisson({mean})"),
        SizeLaw::Geometric { p } => format!("geometric({p})"),
    }
}

fn cluster_from_keys(kv: &mut KvFile) -> Result<ClusterModel> {
    let Some((line, kind)) = kv.take_str("cluster.kind") else {
        return Ok(ClusterModel::Empty);
    };
    let size_key = |kv: &mut KvFile, key: &str| -> Result<SizeLaw> {
        let (line, v) = kv.require_str(key)?;
        parse_size_expr(&v)
            .ok_or_else(|| config_err(line, format!("bad size law `{v}` for `{key}`")))
    };
    let model = match kind.as_str() {
        "empty" => ClusterModel::Empty,
        "fixed" => ClusterModel::Fixed {
            size: kv.require("cluster.size")?,
            offset: kv.take_or("cluster.offset", 0.0)?,
        },
        "bartlett_lewis" => {
            let size = size_key(kv, "cluster.size_law")?;
            let (sline, sv) = kv.require_str("cluster.step")?;
            let step = parse_law_expr(&sv)
                .ok_or_else(|| config_err(sline, format!("bad step law `{sv}`")))?;
            ClusterModel::BartlettLewis { size, step }
        }
        "threshold" => ClusterModel::Threshold {
            threshold: kv.require("cluster.threshold")?,
            above: size_key(kv, "cluster.above")?,
            below: size_key(kv, "cluster.below")?,
            jitter_sd: kv.take_or("cluster.jitter_sd", 1.0)?,
        },
        "example2" => example_two_cluster(),
        other => return Err(config_err(line, format!("unknown cluster.kind `{other}`"))),
    };
    model
        .validate()
        .map_err(|e| config_err(line, e.to_string()))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn example_two_accessors() {
        let spec = example_two_preset();
        assert_relative_eq!(spec.mean_interarrival(), 2.5);
        assert_relative_eq!(spec.mean_cluster_size().unwrap(), 1.4, epsilon = 1e-12);
        assert_relative_eq!(spec.intensity().unwrap(), 0.56, epsilon = 1e-12);
        // 0.5 * E[X; X > 1] + 5 * E[X; X <= 1] = 0.5 * 2.4 + 5 * 0.1
        assert_relative_eq!(spec.mean_size_interarrival().unwrap(), 1.7, epsilon = 1e-12);
        assert!(spec.mean_size_radius().is_none());
    }

    #[test]
    fn bartlett_lewis_accessors() {
        let spec = bartlett_lewis_preset(
            1.0,
            SizeLaw::Poisson { mean: 1.0 },
            InterarrivalLaw::exponential(1.0),
        )
        .unwrap();
        assert_relative_eq!(spec.mean_cluster_size().unwrap() + 1.0, 2.0);
        assert!(spec.as_bartlett_lewis().is_some());
        assert!(example_two_preset().as_bartlett_lewis().is_none());
        let degenerate = bartlett_lewis_preset(
            2.0,
            SizeLaw::Fixed { n: 0 },
            InterarrivalLaw::exponential(1.0),
        )
        .unwrap();
        assert_relative_eq!(degenerate.intensity().unwrap(), 2.0);
    }

    #[test]
    fn config_roundtrip() {
        for spec in [
            example_two_preset(),
            bartlett_lewis_preset(
                1.5,
                SizeLaw::Geometric { p: 0.3 },
                InterarrivalLaw::gamma(2.0, 0.5),
            )
            .unwrap(),
            ProcessSpec::new(
                InterarrivalLaw::Mixture {
                    components: vec![
                        (0.25, InterarrivalLaw::exponential(2.0)),
                        (0.75, InterarrivalLaw::uniform(1.0, 3.0)),
                    ],
                },
                ClusterModel::Fixed {
                    size: 2,
                    offset: -0.5,
                },
            )
            .with_delay(
                Delay::Law(InterarrivalLaw::exponential(1.0)),
                ClusterModel::Empty,
            ),
        ] {
            let text: String = spec
                .to_kv_lines()
                .into_iter()
                .map(|(k, v)| format!("{k} = {v}\n"))
                .collect();
            let mut kv = KvFile::parse(&text).unwrap();
            let back = ProcessSpec::from_kv(&mut kv).unwrap();
            kv.finish().unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn config_errors() {
        let mut kv = KvFile::parse("cluster.kind = example2\n").unwrap();
        assert!(matches!(
            ProcessSpec::from_kv(&mut kv),
            Err(Error::Config { .. })
        ));

        let mut kv = KvFile::parse(
            "interarrival.kind = uniform\ninterarrival.lo = 0\ninterarrival.hi = 5\nbogus = 1\n",
        )
        .unwrap();
        ProcessSpec::from_kv(&mut kv).unwrap();
        assert!(kv.finish().is_err());

        let mut kv =
            KvFile::parse("interarrival.kind = exponential\ninterarrival.rate = -1\n").unwrap();
        assert!(ProcessSpec::from_kv(&mut kv).is_err());

        let mut kv = KvFile::parse("interarrival.kind = lognormal\n").unwrap();
        assert!(ProcessSpec::from_kv(&mut kv).is_err());
    }

    #[test]
    fn law_expressions() {
        assert_eq!(
            parse_law_expr("uniform(0,5)"),
            Some(InterarrivalLaw::uniform(0.0, 5.0))
        );
        assert_eq!(
            parse_law_expr("gamma(2, 0.5)"),
            Some(InterarrivalLaw::gamma(2.0, 0.5))
        );
        assert!(parse_law_expr("uniform(0)").is_none());
        assert_eq!(
            parse_size_expr("poisson(1.5)"),
            Some(SizeLaw::Poisson { mean: 1.5 })
        );
        assert!(parse_size_expr("binomial(3)").is_none());
    }
}
