//! Per-viewpoint cost of HPR against the cached neural head.

use pointvis::geom::{sample_surface, sample_viewpoints, shapes};
use pointvis::hpr::{hpr_visibility, HprParams};
use pointvis::nn::{Descriptor, ModelWeights, Predictor};
use std::time::Instant;

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let cloud = sample_surface(&shapes::torus(1.0, 0.35, 96, 48), n, 1).unwrap();
    let t = Instant::now();
    let predictor = Predictor::new(ModelWeights::random(Descriptor::default(), 1).unwrap()).unwrap();
    println!("weights {:.1} ms", ms(t));
    let t = Instant::now();
    let cache = predictor.features(&cloud).unwrap();
    println!("features {:.1} ms", ms(t));
    for vp in sample_viewpoints(&cloud, 3, 2).unwrap() {
        let t = Instant::now();
        let h = hpr_visibility(&cloud, &vp, &HprParams::linear(2.0)).unwrap();
        let th = ms(t);
        let t = Instant::now();
        let r = predictor.predict(&cloud, &vp, Some(&cache)).unwrap();
        let tn = ms(t);
        println!("hpr {th:.1} ms ({} visible), neural {tn:.1} ms ({} visible)", h.visible_count(), r.visible_count());
    }
}
