//! Property tests for the structural invariants: mesh closure across the
//! parameter space and lossless volume round-trips.

use proptest::prelude::*;
use vesselfit_core::fit::VesselParams;
use vesselfit_core::grid::VoxelGrid;
use vesselfit_core::mesh::{euler_characteristic, signed_volume, validate_watertight};

fn params_strategy() -> impl Strategy<Value = VesselParams> {
    (4usize..7, 3usize..8, 8usize..24).prop_flat_map(|(n_c, p, scale)| {
        let cps = prop::collection::vec(
            (
                (-2.0..2.0f64),
                (-2.0..2.0f64),
                (0.0..(scale as f64)),
            ),
            n_c,
        );
        let radii = prop::collection::vec(0.5..3.0f64, n_c);
        let adjust = prop::collection::vec(
            prop::collection::vec(-0.3..0.3f64, p),
            n_c,
        );
        (cps, radii, adjust, Just((n_c, p, scale)))
    })
    .prop_map(|(cps, radii, adjust, (_n_c, p, scale))| VesselParams {
        centerline_cp: cps
            .into_iter()
            .enumerate()
            .map(|(i, (x, y, z))| [x + 10.0, y + 10.0, z + i as f64 * scale as f64 / 4.0])
            .collect(),
        radius_cp: radii,
        adjustment_cp: adjust,
        p,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_built_mesh_is_closed_and_oriented(params in params_strategy(), s in 4usize..20) {
        prop_assume!(params.validate().is_ok());
        let mesh = params.as_generic().build_mesh(s).unwrap();
        validate_watertight(&mesh).unwrap();
        prop_assert_eq!(mesh.n_vertices(), params.p * s + 2);
        prop_assert_eq!(mesh.n_faces(), 2 * params.p * s);
        prop_assert_eq!(euler_characteristic(&mesh), 2);
        prop_assert!(signed_volume(&mesh) > 0.0);
    }

    #[test]
    fn masks_roundtrip_through_disk(
        dims in prop::array::uniform3(1usize..6),
        seed in any::<u8>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed as u64);
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let grid = VoxelGrid::from_data(dims, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nrrd");
        vesselfit_core::io::write_nrrd_mask(&path, &grid).unwrap();
        let back = vesselfit_core::io::read_nrrd_mask(&path).unwrap();
        prop_assert_eq!(grid, back);
    }
}
