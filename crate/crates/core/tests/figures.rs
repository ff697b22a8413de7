//! Figure rendering against the checked-in golden file.

use raterlens::report::{render_heatmap, ColorRamp};
use raterlens::similarity::HeatmapMatrix;

fn golden_matrix() -> HeatmapMatrix {
    HeatmapMatrix {
        cells: vec![
            vec![1.0, 0.25, -0.5],
            vec![0.1, 0.8, 0.0],
            vec![-1.0, 0.4, 0.95],
        ],
        labels: vec![vec![0, 1, 2], vec![1, 0, 1], vec![2, 1, 0]],
        essay_order: vec!["E01".into(), "E02".into(), "E03".into()],
    }
}

#[test]
fn heatmap_3x3_matches_golden_bytes() {
    let svg = render_heatmap(&golden_matrix(), &ColorRamp::default()).unwrap();
    let golden = include_str!("data/heatmap_3x3_golden.svg");
    assert_eq!(svg, golden);
}

#[test]
fn heatmap_rendering_is_byte_stable() {
    let a = render_heatmap(&golden_matrix(), &ColorRamp::default()).unwrap();
    let b = render_heatmap(&golden_matrix(), &ColorRamp::default()).unwrap();
    assert_eq!(a, b);
}
