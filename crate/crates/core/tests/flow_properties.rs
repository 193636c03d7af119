use flowspeaker::autodiff::ParamStore;
use flowspeaker::{Flow, FlowConfig, Mat, RngStream};
use proptest::prelude::*;

fn jittered_flow(dim: usize, blocks: usize, seed: u64) -> (ParamStore, Flow) {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let mut flow = Flow::new(&mut store, FlowConfig::new(dim, blocks), &mut rng).unwrap();
    let batch = Mat::from_vec(16, dim, (0..16 * dim).map(|_| 1.5 * rng.next_normal() - 0.5).collect()).unwrap();
    flow.initialize(&mut store, &batch).unwrap();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let scale = 0.1 / (store.get(id).cols() as f64).sqrt();
        for v in store.get_mut(id).as_mut_slice() {
            *v += scale * rng.next_normal();
        }
    }
    (store, flow)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inverse_undoes_forward(half in 1usize..=8, blocks in 1usize..=6, seed in any::<u64>()) {
        let dim = 2 * half;
        let (store, flow) = jittered_flow(dim, blocks, seed);
        let mut rng = RngStream::new(seed ^ 1);
        let x = Mat::from_vec(8, dim, (0..8 * dim).map(|_| 3.0 * rng.next_normal()).collect()).unwrap();
        let (z, fwd) = flow.forward(&store, &x).unwrap();
        let (back, inv) = flow.inverse(&store, &z).unwrap();
        for i in 0..8 {
            let scale = 1.0 + x.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in x.row(i).iter().zip(back.row(i)) {
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
            prop_assert!((fwd[i] + inv[i]).abs() <= 1e-9 * (1.0 + fwd[i].abs()));
        }
    }

    #[test]
    fn rows_are_transformed_independently(seed in any::<u64>()) {
        let (store, flow) = jittered_flow(6, 3, seed);
        let mut rng = RngStream::new(seed ^ 2);
        let x = Mat::from_vec(5, 6, (0..30).map(|_| rng.next_normal()).collect()).unwrap();
        let (z, ld) = flow.forward(&store, &x).unwrap();
        for i in 0..5 {
            let (zi, ldi) = flow.forward_vec(&store, x.row(i)).unwrap();
            prop_assert_eq!(zi.as_slice(), z.row(i));
            prop_assert_eq!(ldi, ld[i]);
        }
    }
}
