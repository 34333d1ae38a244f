use std::sync::Arc;

use image::RgbImage;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use travnav_core::map::{MapPrior, VoxelMap};
use travnav_core::oracle::{
    build_prompt, mock_query, parse_reply, project_regions, Camera, LatencyModel, MockOracle, Oracle, OracleQuery,
    RobotDescription, TerrainField, TerrainStats,
};
use travnav_core::segmentation::LabelMap;
use travnav_core::PoseSE2;

struct Constant(TerrainStats);

impl TerrainField for Constant {
    fn terrain_at(&self, _x: f64, _y: f64) -> Option<TerrainStats> {
        Some(self.0)
    }
}

struct HalfPlane;

impl TerrainField for HalfPlane {
    fn terrain_at(&self, x: f64, _y: f64) -> Option<TerrainStats> {
        (x >= 0.0).then_some(TerrainStats { m: 0.9, sigma: 0.0 })
    }
}

fn formats() -> impl Strategy<Value = (f64, u8)> {
    (0.0..=1.0f64, 0u8..5)
}

fn render(v: f64, style: u8) -> String {
    match style {
        0 => format!("{v}"),
        1 => format!("{v:.2}"),
        2 => format!("{v:e}"),
        3 => format!("{v:.6}"),
        _ => format!("{:.1}", v),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn contract_replies_always_parse(vals in prop::collection::vec(formats(), 1..=100), chatter in "[a-zA-Z ,.:!]{0,40}") {
        let n = vals.len() as u32;
        let prompt = build_prompt(&RobotDescription::default(), n);
        let needle = format!("list of {} number", n);
        prop_assert!(prompt.contains(&needle));
        let body: Vec<String> = vals.iter().map(|(v, s)| render(*v, *s)).collect();
        let reply = format!("{chatter}[{}]{chatter}", body.join(", "));
        let parsed = parse_reply(&reply, n).unwrap();
        prop_assert_eq!(parsed.values.len(), vals.len());
        for (p, b) in parsed.values.iter().zip(&body) {
            prop_assert_eq!(*p, b.parse::<f64>().unwrap());
        }
    }
}

#[test]
fn degenerate_gaussian_returns_mean() {
    let field = Constant(TerrainStats { m: 0.8, sigma: 0.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = mock_query(&field, &[vec![[0.0, 0.0]], vec![[1.0, 1.0], [2.0, 2.0]]], 0.5, &LatencyModel::Zero, &mut rng);
    assert_eq!(r.values, vec![0.8, 0.8]);
    assert_eq!(r.latency, 0.0);
}

#[test]
fn mock_is_seed_deterministic() {
    let field: Arc<dyn TerrainField> = Arc::new(Constant(TerrainStats { m: 0.4, sigma: 0.2 }));
    let q = OracleQuery {
        image: RgbImage::new(2, 2),
        n_regions: 3,
        prompt: String::new(),
        footprints: vec![vec![[0.0, 0.0]]; 3],
    };
    let mut a = MockOracle::new(field.clone(), 7, LatencyModel::default());
    let mut b = MockOracle::new(field, 7, LatencyModel::default());
    for _ in 0..5 {
        assert_eq!(a.query(&q).unwrap(), b.query(&q).unwrap());
    }
}

#[test]
fn uncovered_region_gets_prior_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = mock_query(&HalfPlane, &[vec![[-1.0, 0.0]], vec![[1.0, 0.0]], vec![]], 0.3, &LatencyModel::Zero, &mut rng);
    assert_eq!(r.values, vec![0.3, 0.9, 0.3]);
    assert_eq!(r.diagnostics.uncovered, vec![1, 3]);
}

#[test]
fn mock_statistics_converge() {
    let (m, s) = (0.5, 0.1);
    let field = Constant(TerrainStats { m, sigma: s });
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 100_000;
    let fp = [vec![[0.0, 0.0]]];
    let xs: Vec<f64> = (0..n).map(|_| mock_query(&field, &fp, 0.5, &LatencyModel::Zero, &mut rng).values[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let nf = n as f64;
    assert!((mean - m).abs() < 3.0 * s / nf.sqrt(), "mean {mean}");
    assert!((var - s * s).abs() < 3.0 * s * s * (2.0 / (nf - 1.0)).sqrt(), "var {var}");
}

fn map() -> VoxelMap {
    VoxelMap::new(0.25, [-50.0, -50.0, -0.125], MapPrior::default()).unwrap()
}

#[test]
fn projection_respects_range_and_dedups() {
    let cam = Camera::default();
    let n = cam.width * cam.height;
    // one region per row
    let labels = LabelMap::new(cam.width, cam.height, (0..n).map(|i| i / cam.width + 1).collect()).unwrap();
    let pose = PoseSE2::new(1.0, -2.0, 0.7);
    let m = map();
    let regions = project_regions(&labels, &cam, &pose, &m).unwrap();
    let lens = cam.lens_xy(&pose);
    let mut total = 0;
    for keys in &regions {
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "sorted and unique");
        for k in keys {
            let c = m.center_of(*k);
            assert!((c[0] - lens[0]).hypot(c[1] - lens[1]) <= cam.max_range);
            assert_eq!(k.iz, 0);
        }
        total += keys.len();
    }
    assert!(total > 0);
    // the top rows look past the range limit
    assert!(regions[0].is_empty());
    // bottom rows are dense; neighbouring pixels share voxels
    assert!(regions[cam.height as usize - 1].len() < cam.width as usize);
}

#[test]
fn bottom_centre_voxel_is_ahead_of_robot() {
    let cam = Camera::default();
    let pose = PoseSE2::new(3.0, 3.0, 0.0);
    let labels = LabelMap::new(
        cam.width,
        cam.height,
        (0..cam.width * cam.height)
            .map(|i| if i / cam.width == cam.height - 1 && i % cam.width == cam.width / 2 { 2 } else { 1 })
            .collect(),
    )
    .unwrap();
    let m = map();
    let regions = project_regions(&labels, &cam, &pose, &m).unwrap();
    assert_eq!(regions[1].len(), 1);
    // analytic ray-plane intersection for the pixel centre
    let f = cam.focal();
    let down = cam.pitch_deg.to_radians() + ((cam.height as f64 - 0.5 - cam.height as f64 / 2.0) / f).atan();
    let lateral_off = 0.5 / f;
    let fwd = cam.mount_height / down.tan();
    let expect_x = 3.0 + cam.mount_forward + fwd;
    let expect_y = 3.0 - lateral_off * cam.mount_height / down.sin();
    assert_eq!(regions[1][0], m.key_at(expect_x, expect_y, 0.0));
}

#[test]
fn mismatched_labels_are_rejected() {
    let labels = LabelMap::new(4, 4, vec![1; 16]).unwrap();
    assert!(project_regions(&labels, &Camera::default(), &PoseSE2::new(0.0, 0.0, 0.0), &map()).is_err());
}
