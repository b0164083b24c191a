use vbp_core::pipeline::{default_pfsm, sample_labels, Label};
use vbp_core::rng::Stream;

fn main() {
    let fsm = default_pfsm();
    for fixture_seed in 1..300u64 {
        // replicate the experiment pipeline's label stream derivation
        let mut s = Stream::derive(fixture_seed, &[1]);
        let label_seed = s.next_u64();
        let mut rng = Stream::new(label_seed);
        let labels = sample_labels(&fsm, 45, &mut rng).unwrap();
        let abc = labels.chunks(3).filter(|t| t[2] == Label::C).count();
        if abc == 10 || abc == 11 {
            print!(" {}:{}", fixture_seed, abc);
        }
    }
    println!();
}
