//! The dual nearest-neighbor indices: exact and approximate k-NN in
//! descriptor space, exact fixed-radius search in 3D, and the matching cost
//! model they feed (`M x t_64D + N x t_3D`).
//!
//! ```sh
//! cargo run -p featloc --example nearest_neighbor_search
//! ```

use std::time::Instant;

use featloc::feature_map::Descriptor;
use featloc::index::{DescriptorIndex, DescriptorSearch, SpatialIndex};
use featloc::simworld::{generate_world, world_to_map, WorldSpec};
use nalgebra::Point3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() -> featloc::Result<()> {
    // All-distinctive descriptors: measures the index itself rather than
    // the aliasing of the default world model.
    let spec = WorldSpec {
        landmark_count: 20_000,
        repeat_fraction: 0.0,
        distinct_fraction: 1.0,
        rng_seed: 3,
        ..WorldSpec::default()
    };
    let map = world_to_map(&generate_world(&spec)?);

    let exact = DescriptorIndex::build(&map, DescriptorSearch::Exact);
    let forest = DescriptorIndex::build(&map, DescriptorSearch::default());
    let spatial = SpatialIndex::build(&map);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let queries: Vec<Descriptor> = (0..400)
        .map(|_| {
            let pick = rng.gen_range(0..map.len());
            let noisy: Vec<f64> = map
                .feature(pick as u64)
                .descriptor
                .values()
                .iter()
                .map(|v| v + 0.02 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            Descriptor::new(noisy).unwrap()
        })
        .collect();

    let t0 = Instant::now();
    let truth: Vec<u64> = queries.iter().map(|q| exact.knn(q, 1).unwrap()[0].0).collect();
    let exact_us = t0.elapsed().as_secs_f64() * 1e6 / queries.len() as f64;

    let t1 = Instant::now();
    let approx: Vec<u64> = queries.iter().map(|q| forest.knn(q, 1).unwrap()[0].0).collect();
    let forest_us = t1.elapsed().as_secs_f64() * 1e6 / queries.len() as f64;
    let recall = truth.iter().zip(&approx).filter(|(a, b)| a == b).count();

    println!(
        "descriptor 1-NN over {} features: exact {exact_us:.1} us/query, forest {forest_us:.1} us/query",
        map.len()
    );
    println!("forest recall@1 vs exact: {recall}/{}", queries.len());

    let centers: Vec<Point3<f64>> = (0..400)
        .map(|_| {
            Point3::new(
                rng.gen_range(0.0..30.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.0..3.0),
            )
        })
        .collect();
    let t2 = Instant::now();
    let mut hits = 0usize;
    for c in &centers {
        hits += spatial.radius(c, 0.5).unwrap().len();
    }
    let spatial_us = t2.elapsed().as_secs_f64() * 1e6 / centers.len() as f64;
    println!(
        "spatial radius 0.5 m: {spatial_us:.1} us/query, {:.1} candidates avg",
        hits as f64 / centers.len() as f64
    );
    println!(
        "cost-model ordering: t_3D ({spatial_us:.1} us) vs t_64D ({forest_us:.1} us) -> {}",
        if spatial_us < forest_us { "t_3D < t_64D" } else { "t_3D >= t_64D" }
    );
    Ok(())
}
