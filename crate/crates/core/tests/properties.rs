use proptest::prelude::*;
use rotor::bits::BitString;
use rotor::calibrate::{calibrate, CalibrationOptions};
use rotor::channel::Strategy as Adversary;
use rotor::codec::BlockCode;
use rotor::compiler::{run_compiled, RunOptions};
use rotor::params::{assemble, RunConfig, RunParams};
use rotor::pebble::{replay, Endpoint, Side};
use rotor::protocol::ProtocolSpec;
use rotor::trace::Summary;
use rotor::tree_code::{tc_decode, DecodeSearchParams, HistoryMove, TreeCode};
use std::sync::OnceLock;

fn moves() -> impl Strategy<Value = Vec<HistoryMove>> {
    prop::collection::vec((0usize..4).prop_map(|i| HistoryMove::ALL[i]), 1..40)
}

fn small_params() -> &'static RunParams {
    static P: OnceLock<RunParams> = OnceLock::new();
    P.get_or_init(|| {
        let mut cfg = RunConfig::new(3, 48);
        cfg.hash_exponent = Some(8);
        let opts = CalibrationOptions { tolerance_trials: 0, ..Default::default() };
        assemble(&cfg, &calibrate(&cfg, &opts).unwrap().calibration).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_code_is_online(seed: u64, hist in moves()) {
        let tc = TreeCode::new(seed, 64, hist.len());
        let full = tc.encode(&hist).unwrap();
        prop_assert_eq!(full.len(), hist.len());
        for i in 1..=hist.len() {
            prop_assert_eq!(&tc.encode(&hist[..i]).unwrap()[..], &full[..i]);
            prop_assert_eq!(tc.encode_next(&hist[..i]).unwrap(), full[i - 1]);
        }
    }

    #[test]
    fn clean_stream_decodes_to_its_history(seed: u64, hist in moves()) {
        let tc = TreeCode::new(seed, 64, hist.len());
        let enc = tc.encode(&hist).unwrap();
        prop_assert_eq!(tc_decode(&tc, &enc, DecodeSearchParams::default()), hist);
    }

    #[test]
    fn cached_guess_equals_full_replay(
        seed: u64,
        hist in moves(),
        hits in prop::collection::vec((any::<prop::sample::Index>(), 1u32..64), 0..3),
    ) {
        let tc = TreeCode::new(seed, 64, hist.len());
        let mut recv = tc.encode(&hist).unwrap();
        for (at, delta) in hits {
            let i = at.index(recv.len());
            recv[i] = (recv[i] + delta) % 64;
        }
        let search = DecodeSearchParams::default();
        let mut ep = Endpoint::new(Side::Party, TreeCode::new(!seed, 64, hist.len()), tc.clone(), search);
        for i in 0..recv.len() {
            ep.receive(recv[i]);
            let decoded = tc_decode(&tc, &recv[..=i], search);
            prop_assert_eq!(ep.guess_peer_pebble(), &replay(&decoded)[..]);
        }
    }

    #[test]
    fn block_code_corrects_one_flip(bytes in 1usize..12, beta in 2usize..4, seed: u64, at: prop::sample::Index) {
        let len = 8 * bytes;
        let code = BlockCode::new(len, beta).unwrap();
        let msg: BitString = (0..len).map(|i| (seed.rotate_left(i as u32) & 1) == 1).collect();
        let cw = code.encode(&msg).unwrap();
        prop_assert_eq!(cw.len(), code.codeword_len());
        prop_assert_eq!(code.decode(&cw).unwrap(), Some(msg.clone()));
        if code.distance_bits() < 3 {
            return Ok(());
        }
        let mut bad = cw.clone();
        bad.flip(at.index(cw.len()));
        prop_assert_eq!(code.decode(&bad).unwrap(), Some(msg));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flip_and_bit_accounting_is_exact(seed in 0u64..1000, budget in 0u64..6) {
        let p = RunParams { seed, strategy: Adversary::UniformRandom, epsilon: 0.1, budget, ..small_params().clone() };
        let spec = ProtocolSpec::random(3, 48, seed).unwrap();
        let run = run_compiled(&spec, &p, &RunOptions::default()).unwrap();
        prop_assert!(run.spent() <= budget);
        let per_record: usize = run.records.iter().map(|r| r.flips).sum();
        prop_assert_eq!(per_record as u64, run.spent());
        let logged: usize = run.records.iter().map(|r| r.flip_log.len()).sum();
        prop_assert_eq!(logged, run.flips.len());
        for r in &run.records {
            prop_assert_eq!(r.flips, r.flip_log.len());
            prop_assert!(r.flip_log.iter().all(|f| f.iteration == r.iteration));
            prop_assert_eq!(r.bits_sent.iter().sum::<u64>(), r.bits_received.iter().sum::<u64>());
        }
        prop_assert_eq!(run.records.last().map_or(0, |r| r.spent), run.spent());
        prop_assert!(Summary::new(&run).accounting_ok);
    }

    #[test]
    fn leaders_rotate(seed in 0u64..1000) {
        let p = RunParams { seed, ..small_params().clone() };
        let spec = ProtocolSpec::random(3, 48, seed).unwrap();
        let run = run_compiled(&spec, &p, &RunOptions::default()).unwrap();
        for (i, r) in run.records.iter().enumerate() {
            prop_assert_eq!(r.iteration, i);
            prop_assert_eq!(r.leader, i % 3);
        }
        prop_assert!(run.correct());
    }
}
