// SPDX-License-Identifier: Apache-2.0

mod common;

use std::os::unix::net::UnixStream;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use common::{dealer_material, dealer_session, he_session, load_fixture, random_graph, random_input, WeightScale};
use sealedinfer::graph::{eval_fixed, strip_weights};
use sealedinfer::net::{run_local_pair, run_secure_inference, Mode, Preprocessing, Role, SessionParams};
use sealedinfer::ring::FixedPointConfig;
use sealedinfer::sharing::crnd::{is_claimed, party_file, write_file};
use sealedinfer::sharing::PartyId;
use sealedinfer::Error;

fn params<'a>(
    role: Role,
    bundle: &'a sealedinfer::graph::GraphBundle,
    input: Option<&'a [f64]>,
    cfg: FixedPointConfig,
    label: &str,
    preprocessing: Preprocessing,
) -> SessionParams<'a> {
    let mode = match preprocessing {
        Preprocessing::He { .. } => Mode::TwoPcHe,
        _ => Mode::Dealer,
    };
    SessionParams {
        role,
        bundle,
        input,
        fixed_point: cfg,
        mode,
        randomness_label: label.to_string(),
        preprocessing,
        seed: Some(1),
        accept_label_prefix: false,
    }
}

#[test]
fn fixtures_match_eval_fixed_in_dealer_mode() {
    let cfg = FixedPointConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for name in ["mini_cnn", "branchy", "tiny_mlp"] {
        let bundle = load_fixture(name);
        let x = random_input(&mut rng, bundle.graph.input_len());
        let (server, client) = dealer_session(&bundle, &x, cfg, 11);
        assert!(server.logits_ring.is_none(), "the model owner learns no output");
        let want = eval_fixed(&bundle.graph, &bundle.weights, &x, &cfg).unwrap();
        assert_eq!(client.logits_ring.unwrap(), want, "{name}");
        assert_eq!(client.leftover, Default::default(), "{name}: budget not used up exactly");
    }
}

#[test]
fn he_mode_stays_within_one_ulp_per_truncation() {
    let cfg = FixedPointConfig::default();
    let bundle = load_fixture("tiny_mlp");
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let x = random_input(&mut rng, bundle.graph.input_len());
    let (_, client) = he_session(&bundle, &x, cfg, 256, 5);
    let want = cfg.decode_all(&eval_fixed(&bundle.graph, &bundle.weights, &x, &cfg).unwrap());
    let bound = bundle.graph.truncation_layers() as f64 / 4096.0;
    for (g, w) in client.logits.unwrap().iter().zip(&want) {
        assert!((g - w).abs() <= bound, "{g} vs {w}");
    }
}

#[test]
fn label_mismatch_stops_both_parties() {
    let cfg = FixedPointConfig::default();
    let bundle = load_fixture("tiny_mlp");
    let client = strip_weights(&bundle);
    let x = vec![0.1; 6];
    let (a, b) = run_local_pair(
        params(Role::ModelOwner, &bundle, None, cfg, "alpha", Preprocessing::He { modulus_bits: 256 }),
        params(Role::DataOwner, &client, Some(&x), cfg, "beta", Preprocessing::He { modulus_bits: 256 }),
    );
    for r in [a, b] {
        match r {
            Err(Error::HandshakeMismatch { field, .. }) => assert_eq!(field, "randomness_label"),
            Err(Error::PeerAbort(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn wrong_input_shape_sends_nothing() {
    let cfg = FixedPointConfig::default();
    let client = strip_weights(&load_fixture("mini_cnn"));
    let (mine, peer) = UnixStream::pair().unwrap();
    let x = vec![0.0; 10];
    let err = run_secure_inference(
        params(Role::DataOwner, &client, Some(&x), cfg, "s", Preprocessing::He { modulus_bits: 256 }),
        mine,
    )
    .unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch(_)), "{err:?}");
    peer.set_nonblocking(true).unwrap();
    let mut buf = [0u8; 1];
    // the socket is closed without a single byte written
    assert_eq!(std::io::Read::read(&mut &peer, &mut buf).unwrap(), 0);
}

#[test]
fn server_refuses_a_stripped_bundle() {
    let cfg = FixedPointConfig::default();
    let client = strip_weights(&load_fixture("tiny_mlp"));
    let (mine, _peer) = UnixStream::pair().unwrap();
    let err = run_secure_inference(
        params(Role::ModelOwner, &client, None, cfg, "s", Preprocessing::He { modulus_bits: 256 }),
        mine,
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}

#[test]
fn randomness_files_are_single_use() {
    let cfg = FixedPointConfig::default();
    let bundle = load_fixture("tiny_mlp");
    let client = strip_weights(&bundle);
    let dir = tempfile::tempdir().unwrap();
    let (m0, m1) = dealer_material(&bundle, &cfg, 8);
    write_file(&party_file(dir.path(), "once", PartyId::P0), &cfg, &m0).unwrap();
    write_file(&party_file(dir.path(), "once", PartyId::P1), &cfg, &m1).unwrap();
    let x = vec![0.3; 6];
    let run = || {
        run_local_pair(
            params(Role::ModelOwner, &bundle, None, cfg, "once", Preprocessing::Files(dir.path().into())),
            params(Role::DataOwner, &client, Some(&x), cfg, "once", Preprocessing::Files(dir.path().into())),
        )
    };
    let (a, b) = run();
    a.unwrap();
    b.unwrap();
    assert!(is_claimed(&party_file(dir.path(), "once", PartyId::P0)));
    let (a, b) = run();
    assert!(a.is_err() && b.is_err());
    let reused = |r: &sealedinfer::Result<_>| matches!(r, Err(Error::RandomnessReused(_)));
    assert!(reused(&a) || reused(&b));
}

#[test]
fn byte_counts_do_not_depend_on_values() {
    let cfg = FixedPointConfig::new(32, 12).unwrap();
    let bundle = load_fixture("branchy");
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let sizes: Vec<(u64, u64, u64)> = (0..3)
        .map(|i| {
            let x = random_input(&mut rng, bundle.graph.input_len());
            let (s, c) = dealer_session(&bundle, &x, cfg, 20 + i);
            assert_eq!(s.stats.bytes_sent, c.stats.bytes_received);
            assert_eq!(s.stats.rounds, c.stats.rounds);
            (s.stats.bytes_sent, c.stats.bytes_sent, s.stats.rounds)
        })
        .collect();
    assert!(sizes.windows(2).all(|w| w[0] == w[1]), "{sizes:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_graphs_match_eval_fixed(seed in any::<u64>(), wide in any::<bool>()) {
        let cfg = FixedPointConfig::new(if wide { 64 } else { 32 }, 12).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bundle = random_graph(&mut rng, "p", WeightScale::Moderate);
        let x = random_input(&mut rng, bundle.graph.input_len());
        let (_, client) = dealer_session(&bundle, &x, cfg, seed);
        prop_assert_eq!(client.logits_ring.unwrap(), eval_fixed(&bundle.graph, &bundle.weights, &x, &cfg).unwrap());
    }
}
