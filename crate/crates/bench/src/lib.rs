//! Fixtures shared by the benchmarks.

use flowspeaker::autodiff::ParamStore;
use flowspeaker::{Flow, FlowConfig, Mat, RngStream, SpeakerSets};

/// A 12-block flow with data-initialized actnorms and jittered parameters.
pub fn flow(dim: usize, seed: u64) -> (ParamStore, Flow) {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let mut flow = Flow::new(&mut store, FlowConfig::new(dim, 12), &mut rng).expect("even dim");
    flow.initialize(&mut store, &batch(32, dim, seed + 1)).expect("initializable");
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let scale = 0.1 / (store.get(id).cols() as f64).sqrt();
        for v in store.get_mut(id).as_mut_slice() {
            *v += scale * rng.next_normal();
        }
    }
    (store, flow)
}

pub fn batch(rows: usize, dim: usize, seed: u64) -> Mat {
    let mut rng = RngStream::new(seed);
    Mat::from_vec(rows, dim, (0..rows * dim).map(|_| rng.next_normal()).collect()).expect("finite")
}

/// Random sets shaped like the default evaluation: `speakers` training
/// speakers and 20 prompts with `per_prompt` generated speakers each.
pub fn speaker_sets(speakers: usize, per_prompt: usize, dim: usize, seed: u64) -> SpeakerSets {
    let mut rng = RngStream::new(seed);
    let mut v = || (0..dim).map(|_| rng.next_normal()).collect::<Vec<f64>>();
    let mut sets = SpeakerSets::default();
    for i in 0..speakers {
        let id = format!("s{i:03}");
        sets.syn.insert(id.clone(), v());
        sets.gt.insert(id.clone(), v());
        sets.syn_same_pairs.insert(id, (v(), v()));
    }
    for p in 0..20 {
        for _ in 0..per_prompt {
            sets.gen.push((format!("p{p:02}"), v()));
        }
    }
    sets
}
