use cyberneuron::neuron::{DEFAULT_CELL_MAX, DEFAULT_THRESHOLD};
use cyberneuron::{Classification, CyberNeuron, Direction, NeuronParams, Pattern, TrainStatus, Trainer};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neuron dimensions plus a list of `(table, cell, value)` writes.
fn arb_neuron() -> impl Strategy<Value = CyberNeuron> {
    (1usize..=8, 1u32..=8)
        .prop_flat_map(|(n, bits)| {
            let cells = 1usize << bits;
            (
                Just((n, bits)),
                prop::collection::vec((0..n, 0..cells, -126i16..=127), 0..64),
            )
        })
        .prop_map(|((n, bits), writes)| {
            let mut neuron = CyberNeuron::new(n, bits).unwrap();
            for (t, c, v) in writes {
                neuron.set_cell(t, c, v);
            }
            neuron
        })
}

fn arb_pattern(n: usize, bits: u32) -> impl Strategy<Value = Pattern> {
    prop::collection::vec(0u32..(1 << bits), n).prop_map(Pattern::new)
}

fn arb_neuron_and_pattern() -> impl Strategy<Value = (CyberNeuron, Pattern)> {
    arb_neuron().prop_flat_map(|n| {
        let p = arb_pattern(n.n_inputs(), n.bits_per_input());
        (Just(n), p)
    })
}

fn cells_in_bounds(n: &CyberNeuron) -> bool {
    let p = n.params();
    n.tables()
        .iter()
        .all(|t| t.cells().iter().all(|&c| (p.cell_min..=p.cell_max).contains(&c)))
}

#[derive(Clone, Debug)]
enum Op {
    Add(Vec<u32>, bool, u64),
    Remove(Vec<u32>, bool, u64),
    Modifier(Vec<u32>, i64, bool, u64),
}

fn arb_ops(n: usize, bits: u32) -> impl Strategy<Value = Vec<Op>> {
    let input = prop::collection::vec(0u32..(1 << bits), n);
    let op = prop_oneof![
        (input.clone(), any::<bool>(), any::<u64>()).prop_map(|(i, r, s)| Op::Add(i, r, s)),
        (input.clone(), any::<bool>(), any::<u64>()).prop_map(|(i, r, s)| Op::Remove(i, r, s)),
        (input, -300i64..300, any::<bool>(), any::<u64>()).prop_map(|(i, m, r, s)| Op::Modifier(i, m, r, s)),
    ];
    prop::collection::vec(op, 1..40)
}

fn trainer(random: bool, seed: u64) -> Trainer {
    if random {
        Trainer::random(seed)
    } else {
        Trainer::sequential()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn evaluation_is_pure_and_sums_active_cells((neuron, pattern) in arb_neuron_and_pattern()) {
        let before = neuron.clone();
        let trace = neuron.evaluate(&pattern).unwrap();
        let expected: i64 = neuron
            .tables()
            .iter()
            .zip(pattern.inputs())
            .map(|(t, &i)| t.get(i as usize) as i64)
            .sum();
        prop_assert_eq!(trace.output, expected);
        prop_assert_eq!(neuron.output(pattern.inputs()).unwrap(), expected);
        prop_assert_eq!(&trace.active_cells[..], pattern.inputs());
        prop_assert_eq!(neuron, before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cells_stay_within_bounds(
        (n, bits, ops) in (1usize..=6, 1u32..=4).prop_flat_map(|(n, b)| (Just(n), Just(b), arb_ops(n, b))),
        lo in -20i16..=0,
        hi in 1i16..=20,
    ) {
        let params = NeuronParams::default().with_cell_bounds(lo, hi).with_thresholds(15, 2);
        let mut neuron = CyberNeuron::with_params(n, bits, params).unwrap();
        for op in ops {
            match op {
                Op::Add(i, r, s) => { trainer(r, s).train_add(&mut neuron, &Pattern::new(i)).unwrap(); }
                Op::Remove(i, r, s) => { trainer(r, s).train_remove(&mut neuron, &Pattern::new(i)).unwrap(); }
                Op::Modifier(i, m, r, s) => {
                    let trace = neuron.evaluate(&Pattern::new(i)).unwrap();
                    if r {
                        neuron.apply_modifier_random(&trace, m, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
                    } else {
                        neuron.apply_modifier_sequential(&trace, m).unwrap();
                    }
                }
            }
            prop_assert!(cells_in_bounds(&neuron));
        }
    }

    #[test]
    fn fresh_training_converges_to_known(
        (n, bits, pattern) in (1usize..=8, 1u32..=8)
            .prop_flat_map(|(n, b)| (Just(n), Just(b), arb_pattern(n, b))),
        threshold in 21i32..=400,
        divider in 1u32..=8,
        random in any::<bool>(),
        seed in any::<u64>(),
    ) {
        prop_assume!(n as i64 * DEFAULT_CELL_MAX as i64 >= threshold as i64);
        let params = NeuronParams::default().with_thresholds(threshold, 20).with_divider(divider);
        let mut neuron = CyberNeuron::with_params(n, bits, params).unwrap();
        let out = trainer(random, seed).train_add(&mut neuron, &pattern).unwrap();
        prop_assert_eq!(out.status, TrainStatus::Converged);
        let y = neuron.output(pattern.inputs()).unwrap();
        prop_assert_eq!(neuron.classify(y), Classification::Known);
    }

    #[test]
    fn random_modifier_mass_accounting(
        (neuron, pattern) in arb_neuron_and_pattern(),
        modifier in -50i64..=50,
        seed in any::<u64>(),
    ) {
        // Cells within 50 of both bounds cannot clamp under |modifier| <= 50.
        let mut neuron = neuron;
        for t in 0..neuron.n_inputs() {
            for c in 0..neuron.cells_per_table() {
                let v = neuron.tables()[t].get(c);
                neuron.set_cell(t, c, v.clamp(-76, 77));
            }
        }
        let before = neuron.total_mass();
        let trace = neuron.evaluate(&pattern).unwrap();
        let applied = neuron.apply_modifier_random(&trace, modifier, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(applied.steps, modifier.unsigned_abs());
        prop_assert_eq!(neuron.total_mass() - before, modifier);
    }

    #[test]
    fn training_touches_only_shared_cells(
        (n, bits, p, q) in (1usize..=8, 1u32..=6)
            .prop_flat_map(|(n, b)| (Just(n), Just(b), arb_pattern(n, b), arb_pattern(n, b))),
        random in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut neuron = CyberNeuron::new(n, bits).unwrap();
        Trainer::random(seed ^ 1).train_add(&mut neuron, &Pattern::new(vec![0; n])).unwrap();
        let before = neuron.clone();
        let p_before = neuron.output(p.inputs()).unwrap();
        let out = trainer(random, seed).train_add(&mut neuron, &q).unwrap();
        let delta = neuron.output(p.inputs()).unwrap() - p_before;

        let shared: Vec<usize> = (0..n).filter(|&i| p.inputs()[i] == q.inputs()[i]).collect();
        let shared_change: i64 = shared
            .iter()
            .map(|&t| {
                let c = p.inputs()[t] as usize;
                (neuron.tables()[t].get(c) as i64 - before.tables()[t].get(c) as i64).abs()
            })
            .sum();
        if shared.is_empty() {
            prop_assert_eq!(delta, 0);
        }
        prop_assert!(delta.abs() <= shared_change);
        prop_assert!(shared_change as u64 <= out.total_cell_increments);
    }

    #[test]
    fn degradation_is_linear_in_mismatches(
        (n, bits, p, mask) in (2usize..=10, 2u32..=4).prop_flat_map(|(n, b)| {
            (Just(n), Just(b), arb_pattern(n, b), prop::collection::vec(any::<bool>(), n))
        }),
        threshold in 21i32..=200,
    ) {
        let params = NeuronParams::default().with_thresholds(threshold, 20);
        let mut neuron = CyberNeuron::with_params(n, bits, params).unwrap();
        Trainer::sequential().train_add(&mut neuron, &p).unwrap();
        let t = neuron.output(p.inputs()).unwrap();
        prop_assert_eq!(t, threshold as i64);

        let cells = 1u32 << bits;
        let probe: Vec<u32> = p
            .inputs()
            .iter()
            .zip(&mask)
            .map(|(&v, &flip)| if flip { (v + 1) % cells } else { v })
            .collect();
        let d = mask.iter().filter(|&&f| f).count() as i64;
        let lost: i64 = (0..n)
            .filter(|&i| mask[i])
            .map(|i| neuron.tables()[i].get(p.inputs()[i] as usize) as i64)
            .sum();
        let out = neuron.output(&probe).unwrap();
        prop_assert_eq!(out, t - lost);
        let n = n as i64;
        let ceil = (t + n - 1) / n;
        let floor = t / n;
        prop_assert!(out >= t - d * ceil && out <= t - d * floor, "out {} d {}", out, d);
    }

    #[test]
    fn training_is_deterministic(
        (n, bits, patterns) in (1usize..=8, 1u32..=8).prop_flat_map(|(n, b)| {
            (Just(n), Just(b), prop::collection::vec(arb_pattern(n, b), 1..10))
        }),
        seed in any::<u64>(),
    ) {
        for random in [false, true] {
            let mut a = CyberNeuron::new(n, bits).unwrap();
            let mut b = a.clone();
            let (mut ta, mut tb) = (trainer(random, seed), trainer(random, seed));
            for p in &patterns {
                prop_assert_eq!(ta.train_add(&mut a, p).unwrap(), tb.train_add(&mut b, p).unwrap());
            }
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn serialization_round_trips(neuron in arb_neuron()) {
        let bytes = neuron.to_bytes();
        prop_assert_eq!(bytes.len(), neuron.encoded_len());
        let back = CyberNeuron::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, neuron);
    }

    #[test]
    fn modifier_points_toward_the_goal(below in -1000i64..100, above in 21i64..1000) {
        let neuron = CyberNeuron::new(2, 2).unwrap();
        prop_assert!(neuron.compute_modifier(below, Direction::Add) > 0);
        prop_assert!(neuron.compute_modifier(above, Direction::Remove) < 0);
    }
}

#[test]
fn two_mismatch_probe_interval() {
    let mut neuron = CyberNeuron::new(6, 2).unwrap();
    Trainer::sequential()
        .train_add(&mut neuron, &Pattern::new(vec![1, 3, 0, 1, 2, 1]))
        .unwrap();
    let out = neuron.output(&[1, 3, 2, 0, 2, 1]).unwrap();
    let t = DEFAULT_THRESHOLD as i64;
    assert!(out >= t - 2 * ((t + 5) / 6) && out <= t - 2 * (t / 6));
}
