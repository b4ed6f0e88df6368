use ndarray::{Array2, Axis};
use phydcm_core::volume::{assemble_volume, map_crosshair, render_window, CrosshairPoint, Plane};
use phydcm_core::SliceGeometry;
use proptest::prelude::*;

fn oblique(rows: usize, cols: usize, theta: f64, t: f64) -> SliceGeometry {
    // Rotation about the z axis keeps the directions orthonormal.
    let (s, c) = theta.sin_cos();
    let row_dir = [c, s, 0.0];
    let col_dir = [-s, c, 0.0];
    SliceGeometry {
        position: [3.0 + 0.0 * t, -2.0, t],
        row_dir,
        col_dir,
        pixel_spacing: [0.8, 0.6],
        ..SliceGeometry::axial(rows, cols, 0.0)
    }
}

fn series(rows: usize, cols: usize, n: usize, theta: f64, seed: u64) -> Vec<(Array2<f64>, SliceGeometry)> {
    (0..n)
        .map(|k| {
            let px = Array2::from_shape_fn((rows, cols), |(y, x)| {
                ((seed as usize + k * 131 + y * 17 + x * 7) % 997) as f64 * 0.5 - 100.0
            });
            (px, oblique(rows, cols, theta, k as f64 * 1.25))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn assembly_is_permutation_invariant(
        n in 1usize..8,
        theta in -3.0f64..3.0,
        seed in any::<u32>(),
        perm_seed in any::<u64>(),
    ) {
        let base = series(3, 4, n, theta, seed as u64);
        let mut shuffled = base.clone();
        // Fisher-Yates driven by the proptest seed.
        let mut state = perm_seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = assemble_volume(&base).unwrap();
        let b = assemble_volume(&shuffled).unwrap();
        prop_assert_eq!(a.voxels(), b.voxels());
        prop_assert_eq!(a.spacing().map(f64::to_bits), b.spacing().map(f64::to_bits));
        prop_assert_eq!(a.origin().map(f64::to_bits), b.origin().map(f64::to_bits));
    }

    #[test]
    fn axial_extraction_inverts_assembly(n in 1usize..7, seed in any::<u32>()) {
        let base = series(4, 3, n, 0.3, seed as u64);
        let v = assemble_volume(&base).unwrap();
        for (k, (px, _)) in base.iter().enumerate() {
            prop_assert_eq!(&v.extract_slice(Plane::Axial, k).unwrap(), px);
        }
        prop_assert!(v.extract_slice(Plane::Axial, n).is_err());
    }

    #[test]
    fn window_output_monotone(a in -1e4f64..1e4, b in -1e4f64..1e4, w in 1e-3f64..1e4, l in -1e4f64..1e4) {
        let img = Array2::from_shape_vec((1, 2), vec![a.min(b), a.max(b)]).unwrap();
        let out = render_window(&img, w, l).unwrap();
        prop_assert!(out[[0, 0]] <= out[[0, 1]]);
    }
}

#[test]
fn crosshair_bijection_exhaustive() {
    let (nx, ny, nz) = (4, 5, 6);
    let slices: Vec<_> = (0..nz)
        .map(|k| {
            let px = Array2::from_shape_fn((ny, nx), |(y, x)| (k * 100 + y * 10 + x) as f64);
            (px, SliceGeometry::axial(ny, nx, k as f64 * 2.0))
        })
        .collect();
    let v = assemble_volume(&slices).unwrap();
    assert_eq!(v.dims(), (nx, ny, nz));
    let planes: Vec<Vec<Array2<f64>>> = Plane::ALL
        .iter()
        .map(|&p| (0..v.extent(p)).map(|i| v.extract_slice(p, i).unwrap()).collect())
        .collect();

    let mut seen = std::collections::HashSet::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = CrosshairPoint { x, y, z };
                let m = map_crosshair(p, &v).unwrap();
                assert!(seen.insert((m.axial.index, m.axial.row, m.axial.col)));
                let want = v.voxels()[[z, y, x]];
                for (pi, &plane) in Plane::ALL.iter().enumerate() {
                    let pos = m.get(plane);
                    assert_eq!(CrosshairPoint::from_plane(plane, pos), p);
                    assert_eq!(planes[pi][pos.index][[pos.row, pos.col]], want);
                }
            }
        }
    }
    assert_eq!(seen.len(), nx * ny * nz);
    assert!(map_crosshair(CrosshairPoint { x: nx, y: 0, z: 0 }, &v).is_err());
    assert_eq!(v.voxels().len_of(Axis(0)), nz);
}

#[test]
fn constant_volume_midpoint_renders_128() {
    let img = Array2::from_elem((3, 3), 100.0);
    assert!(render_window(&img, 200.0, 100.0).unwrap().iter().all(|&v| v == 128));
}
