//! Empirical moments of the shipped presets against their closed-form accessors.

use super::*;
use crate::harness::stats::{mean_and_se, two_sample_ks};
use crate::rng::RngStream;

const DRAWS: usize = 200_000;

struct Moments {
    x: Vec<f64>,
    l: Vec<f64>,
    lr: Vec<f64>,
    lx: Vec<f64>,
}

fn draw(spec: &ProcessSpec, seed: u64) -> Moments {
    let mut rng = RngStream::new(seed, 0);
    let mut m = Moments {
        x: Vec::with_capacity(DRAWS),
        l: Vec::with_capacity(DRAWS),
        lr: Vec::with_capacity(DRAWS),
        lx: Vec::with_capacity(DRAWS),
    };
    for _ in 0..DRAWS {
        let x = sample_interarrival(&spec.interarrival, &mut rng);
        let (n, offsets) = sample_cluster(&spec.cluster, x, &mut rng);
        let l = n as f64;
        m.x.push(x);
        m.l.push(l);
        m.lr.push(l * cluster_radius(&offsets));
        m.lx.push(l * x);
    }
    m
}

fn assert_close(name: &str, sample: &[f64], target: f64) {
    let (mean, se) = mean_and_se(sample);
    assert!(
        (mean - target).abs() <= 4.0 * se,
        "{name}: {mean} +- {se} vs {target}"
    );
}

#[test]
fn example_two_moments() {
    let spec = example_two_preset();
    let m = draw(&spec, 21);
    assert_close("E[X]", &m.x, spec.mean_interarrival());
    assert_close("E[L]", &m.l, spec.mean_cluster_size().unwrap());
    assert_close("E[LX]", &m.lx, spec.mean_size_interarrival().unwrap());
    // no closed form for E[LR]; it must at least be finite
    assert!(spec.mean_size_radius().is_none());
    let (lr, _) = mean_and_se(&m.lr);
    assert!(lr.is_finite());
}

#[test]
fn bartlett_lewis_moments() {
    let spec = bartlett_lewis_preset(
        1.5,
        SizeLaw::Poisson { mean: 2.0 },
        InterarrivalLaw::exponential(0.5),
    )
    .unwrap();
    let m = draw(&spec, 22);
    assert_close("E[X]", &m.x, spec.mean_interarrival());
    assert_close("E[L]", &m.l, spec.mean_cluster_size().unwrap());
    assert_close("E[LR]", &m.lr, spec.mean_size_radius().unwrap());
    assert_close("E[LX]", &m.lx, spec.mean_size_interarrival().unwrap());
}

#[test]
fn fixed_and_geometric_moments() {
    let spec = ProcessSpec::new(
        InterarrivalLaw::gamma(2.0, 1.5),
        ClusterModel::BartlettLewis {
            size: SizeLaw::Geometric { p: 0.4 },
            step: InterarrivalLaw::uniform(0.0, 2.0),
        },
    );
    let m = draw(&spec, 23);
    assert_close("E[X]", &m.x, spec.mean_interarrival());
    assert_close("E[L]", &m.l, spec.mean_cluster_size().unwrap());
    assert_close("E[LR]", &m.lr, spec.mean_size_radius().unwrap());
    assert_close("E[LX]", &m.lx, spec.mean_size_interarrival().unwrap());
}

#[test]
fn x_independent_clusters_do_not_depend_on_x() {
    let model = ClusterModel::BartlettLewis {
        size: SizeLaw::Poisson { mean: 3.0 },
        step: InterarrivalLaw::exponential(1.0),
    };
    assert!(!model.depends_on_interarrival());
    let mut rng = RngStream::new(24, 0);
    let mut sizes = |x: f64| -> (Vec<f64>, Vec<f64>) {
        (0..20_000)
            .map(|_| {
                let (n, o) = sample_cluster(&model, x, &mut rng);
                (n as f64, cluster_radius(&o))
            })
            .unzip()
    };
    let (l_small, r_small) = sizes(0.1);
    let (l_large, r_large) = sizes(40.0);
    assert!(!two_sample_ks(&l_small, &l_large, 0.01).unwrap().reject);
    assert!(!two_sample_ks(&r_small, &r_large, 0.01).unwrap().reject);
    assert!(example_two_cluster().depends_on_interarrival());
}
