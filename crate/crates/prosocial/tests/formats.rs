use prosocial::formats::{parse_matrix, read_checkpoint, read_trajectory, write_checkpoint, write_trajectory};
use prosocial_core::envs_markov::{EscalationConfig, GameConfig, HarvestConfig, CHANNELS, DEFAULT_BOARD};
use prosocial_core::markov_training::{record_episode, replay_episode};
use prosocial_core::matrix_games::{dominance_alpha, is_all_subgames_staghunt, DEFAULT_ALPHA_STEP};
use prosocial_core::neural::{ConvPolicyNet, Mode, NetConfig, Scalar};
use prosocial_core::Rng;
use rand::{Rng as _, SeedableRng};

fn round_trip<T: Scalar>() {
    let cfg = NetConfig {
        base_channels: 3,
        ..NetConfig::default()
    };
    let mut rng = Rng::seed_from_u64(1);
    let mut net = ConvPolicyNet::<T>::new(cfg, &mut rng).unwrap();
    let n = 5;
    let input: Vec<T> = (0..n * cfg.input_len()).map(|_| T::of(rng.random_range(0.0..1.0))).collect();
    net.set_mode(Mode::Train);
    net.forward(&input, n).unwrap();
    net.refresh_running_stats(&input, n).unwrap();
    net.set_mode(Mode::Eval);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    std::fs::write(&path, write_checkpoint(&net.state())).unwrap();
    let arrays = read_checkpoint(&std::fs::read_to_string(&path).unwrap(), "net.ckpt").unwrap();
    let mut fresh = ConvPolicyNet::<T>::new(cfg, &mut Rng::seed_from_u64(2)).unwrap();
    let bits = |v: Vec<T>| v.iter().map(|x| x.as_f64().to_bits()).collect::<Vec<_>>();
    assert_ne!(bits(fresh.predict(&input, n).unwrap()), bits(net.predict(&input, n).unwrap()));
    fresh.load_state(&arrays).unwrap();
    assert_eq!(bits(fresh.predict(&input, n).unwrap()), bits(net.predict(&input, n).unwrap()));
}

#[test]
fn checkpoints_restore_networks_exactly() {
    round_trip::<f64>();
    round_trip::<f32>();
}

#[test]
fn checkpoint_for_another_architecture_is_rejected() {
    let mut rng = Rng::seed_from_u64(3);
    let small = ConvPolicyNet::<f64>::new(
        NetConfig {
            base_channels: 2,
            ..NetConfig::default()
        },
        &mut rng,
    )
    .unwrap();
    let mut large = ConvPolicyNet::<f64>::new(NetConfig::default(), &mut rng).unwrap();
    let arrays = read_checkpoint(&write_checkpoint(&small.state()), "mem").unwrap();
    assert!(large.load_state(&arrays).is_err());
}

#[test]
fn trajectory_dumps_replay() {
    for (k, game) in [
        GameConfig::Harvest(HarvestConfig::default()),
        GameConfig::Escalation(EscalationConfig::default()),
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = Rng::seed_from_u64(k as u64);
        let steps = record_episode(game, DEFAULT_BOARD, 120, 9, |_| [rng.random_range(0..4), rng.random_range(0..4)]).unwrap();
        assert!(!steps.is_empty());
        let back = read_trajectory(&write_trajectory(&steps), "dump").unwrap();
        assert_eq!(replay_episode(game, DEFAULT_BOARD, 9, &back).unwrap(), None);
        let mut tampered = back.clone();
        let i = tampered.len() / 2;
        tampered[i].actions[0] = (tampered[i].actions[0] + 1) % 4;
        let diverged = replay_episode(game, DEFAULT_BOARD, 9, &tampered).unwrap();
        assert!(diverged.is_some_and(|d| d >= i), "{diverged:?}");
        assert!(replay_episode(game, DEFAULT_BOARD, 10, &back).unwrap().is_some());
    }
    assert_eq!(CHANNELS * DEFAULT_BOARD * DEFAULT_BOARD, NetConfig::default().input_len());
}

#[test]
fn payoff_tables_feed_the_analysis() {
    let game = parse_matrix("# three effort levels\n4 0 0\n3 2 -1\n1 1 1\n", "mem").unwrap();
    assert!(is_all_subgames_staghunt(&game).unwrap());
    assert!(dominance_alpha(&game, DEFAULT_ALPHA_STEP).unwrap().value() <= 1.0);
    let err = parse_matrix("1 2\nx 4\n", "table.txt").unwrap_err().to_string();
    assert!(err.contains("table.txt") && err.contains('2'), "{err}");
}
