mod common;

use common::{brute_force_cast, label_centroid, scene_for, v, Pinhole};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relscene::layout::{diversify, solve, JitterConfig, LayoutConfig};
use relscene::prompt::RelationKind;
use relscene::render::{render, Renderer};
use relscene::scene::{synthesize, Background, SceneGraph};
use relscene::AssetCatalog;

fn mean_depth(frames: &relscene::FrameSet, label: u8) -> f64 {
    let d: Vec<f64> =
        frames.id_mask.iter().zip(&frames.depth).filter(|(l, _)| **l == label).map(|(_, d)| *d as f64).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

#[test]
fn left_scene_mask_centroids() {
    let (_, scene) = scene_for("cat", RelationKind::LEFT, "dog", "white", 1);
    let f = render(&scene, 512, 512).unwrap();
    let (a, b) = (label_centroid(&f.id_mask, 512, 1).unwrap(), label_centroid(&f.id_mask, 512, 2).unwrap());
    assert!(a.0 < b.0);
}

#[test]
fn depth_scene_mean_depths() {
    let (_, scene) = scene_for("cup", RelationKind::IN_FRONT, "bottle", "white", 1);
    let f = render(&scene, 256, 256).unwrap();
    assert!(mean_depth(&f, 1) < mean_depth(&f, 2));
}

#[test]
fn layers_are_consistent() {
    for (i, r) in RelationKind::ALL.into_iter().enumerate() {
        let (_, scene) = scene_for("cat", r, "dog", "indoor", i as u64);
        let f = render(&scene, 64, 48).unwrap();
        assert_eq!(f.rgb.len(), 64 * 48 * 3);
        assert_eq!(f.depth.len(), 64 * 48);
        for (l, d) in f.id_mask.iter().zip(&f.depth) {
            assert!(*l as usize <= scene.objects.len());
            if *l > 0 {
                assert!(d.is_finite());
            }
        }
    }
}

#[test]
fn depth_matches_brute_force_recast() {
    let catalog = AssetCatalog::default_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (k, r) in [RelationKind::LEFT, RelationKind::ABOVE, RelationKind::BEHIND].into_iter().enumerate() {
        let s = common::spec("horse", r, "chair");
        let layout = diversify(&solve(&s, k as u64, &LayoutConfig::default()), k as u64, &JitterConfig::default());
        let scene = synthesize(&layout, &s, &catalog, "outdoor", k as u64).unwrap();
        let (w, h) = (200u32, 160u32);
        let f = render(&scene, w, h).unwrap();
        let cam = Pinhole::new(&scene.camera, w, h);
        let labelled: Vec<usize> = (0..f.id_mask.len()).filter(|&i| f.id_mask[i] > 0).collect();
        assert!(labelled.len() > 500);
        for _ in 0..1000 {
            let i = labelled[rng.random_range(0..labelled.len())];
            let (px, py) = ((i % w as usize) as u32, (i / w as usize) as u32);
            let (obj, t) = brute_force_cast(&scene, cam.eye, cam.ray(px, py)).expect("labelled pixel hits geometry");
            assert_eq!(obj + 1, f.id_mask[i] as usize, "pixel ({px}, {py})");
            assert!((t - f.depth[i] as f64).abs() < 1e-4, "pixel ({px}, {py}): {t} vs {}", f.depth[i]);
        }
    }
}

#[test]
fn shadows_never_brighten() {
    let (_, scene) = scene_for("bench", RelationKind::LEFT, "dog", "white", 5);
    let lit = Renderer::new(&scene, 128, 128).unwrap().render();
    let unshadowed = Renderer::new(&scene, 128, 128).unwrap().with_shadows(false).render();
    assert!(lit.rgb.iter().zip(&unshadowed.rgb).all(|(a, b)| a <= b));
    assert!(lit.rgb != unshadowed.rgb, "no shadow pixels at all");
    assert_eq!(lit.id_mask, unshadowed.id_mask);
    assert_eq!(lit.depth, unshadowed.depth);
}

#[test]
fn white_background_border() {
    let (_, scene) = scene_for("cat", RelationKind::LEFT, "dog", "white", 2);
    let f = render(&scene, 96, 96).unwrap();
    for x in 0..96 {
        if f.label_at(x, 0) == 0 && f.depth_at(x, 0).is_infinite() {
            assert_eq!(f.rgb_at(x, 0), [255, 255, 255]);
        }
    }
}

#[test]
fn deterministic_render() {
    let (_, scene) = scene_for("cat", RelationKind::NEAR, "dog", "outdoor", 3);
    let a = render(&scene, 80, 80).unwrap();
    let b = render(&scene, 80, 80).unwrap();
    assert_eq!(a, b);
    let parsed = SceneGraph::from_json(&scene.to_json()).unwrap();
    assert_eq!(render(&parsed, 80, 80).unwrap(), a);
}

#[test]
fn empty_scene_white() {
    let (layout, _) = scene_for("cat", RelationKind::LEFT, "dog", "white", 0);
    let s = SceneGraph::empty(layout.camera, Background::Constant { color: [1.0; 3] });
    let f = render(&s, 32, 32).unwrap();
    assert!(f.rgb.iter().all(|&c| c == 255) && f.id_mask.iter().all(|&l| l == 0));
}

#[test]
fn projection_oracle_agrees() {
    let (layout, _) = scene_for("cat", RelationKind::LEFT, "dog", "white", 0);
    let ours = Pinhole::new(&layout.camera, 640, 480);
    let p = relscene::geom::vec3(0.3, -0.7, 0.4);
    let (sx, sy) = relscene::render::project(&p, &layout.camera, 640, 480).unwrap().screen().unwrap();
    let (ox, oy) = ours.project(v(&p)).unwrap();
    assert!((sx - ox).abs() < 1e-9 && (sy - oy).abs() < 1e-9);
}
