import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlsolve.games.tree import P1, P2
from dlsolve.strategy import (
    BehavioralStrategy,
    BeliefState,
    StrategyError,
    StrategyProfile,
    bias_strategy,
    infoset_value,
    mix_strategies,
    reach_weights,
    realization_mixture,
    sample_action,
    state_value,
)

import oracles

EQ = np.array([0.4, 0.4, 0.2])


def rps_strategy(rps, player, vec):
    key = rps.player_infosets(player)[0].key
    return BehavioralStrategy({key: vec}, {key: ("R", "P", "S")}, player)


def kuhn_profile(kuhn, s1: dict, s2: dict) -> StrategyProfile:
    acts = {I.key: I.actions for I in kuhn.infosets}
    return StrategyProfile(BehavioralStrategy(s1, {k: acts[k] for k in s1}, P1),
                           BehavioralStrategy(s2, {k: acts[k] for k in s2}, P2))


def test_vectors_validated():
    with pytest.raises(StrategyError):
        BehavioralStrategy({"k": [0.5, 0.6]})
    with pytest.raises(StrategyError):
        BehavioralStrategy({"k": [-0.1, 1.1]})
    s = BehavioralStrategy({"k": [0.5, 0.5 + 5e-8]})
    assert abs(s["k"].sum() - 1) < 1e-12
    with pytest.raises(KeyError):
        s["missing"]


def test_profile_roundtrip(tmp_path, kuhn):
    prof = StrategyProfile.uniform(kuhn)
    prof.save(tmp_path / "p.json", note="x")
    back = StrategyProfile.load(tmp_path / "p.json")
    for p in (P1, P2):
        for k, v in prof[p].items():
            np.testing.assert_array_equal(back[p][k], v)


def test_state_values_rps(rps):
    eq = StrategyProfile(rps_strategy(rps, P1, EQ), rps_strategy(rps, P2, EQ))
    assert state_value(eq, rps, 0, P1) == pytest.approx(0.0, abs=1e-12)
    rock = StrategyProfile(rps_strategy(rps, P1, EQ), rps_strategy(rps, P2, [1, 0, 0]))
    assert state_value(rock, rps, rps.node_by_history("P"), P1) == 1.0


def test_state_values_zero_sum(kuhn):
    prof = StrategyProfile.uniform(kuhn)
    for h in range(kuhn.n_nodes):
        assert state_value(prof, kuhn, h, P1) + state_value(prof, kuhn, h, P2) == pytest.approx(0, abs=1e-9)


def test_uniform_kuhn_value_matches_monte_carlo(kuhn):
    prof = StrategyProfile.uniform(kuhn)
    exact = state_value(prof, kuhn, 0, P1)
    rng = np.random.default_rng(11)
    samples = []
    for _ in range(20000):
        d = oracles.DEALS[rng.integers(6)]
        pub = ""
        while pub in oracles.KUHN_NODES:
            pub += oracles.KUHN_NODES[pub][1][rng.integers(2)]
        samples.append(oracles.kuhn_payoff(d, pub))
    se = np.std(samples) / np.sqrt(len(samples))
    assert abs(np.mean(samples) - exact) < 3 * se


def test_infoset_value_rps(rps):
    prof = StrategyProfile(rps_strategy(rps, P1, EQ), rps_strategy(rps, P2, [1, 0, 0]))
    key = rps.player_infosets(P2)[0].key
    beliefs = {rps.node_by_history(a): w for a, w in zip("RPS", EQ)}
    assert infoset_value(prof, rps, key, beliefs) == pytest.approx(0.0, abs=1e-12)
    scaled = {h: 7 * w for h, w in beliefs.items()}
    assert infoset_value(prof, rps, key, scaled) == pytest.approx(0.0, abs=1e-12)


def test_infoset_value_weighted_average(kuhn):
    # two-state infoset: belief-weighted average of the state values
    prof = StrategyProfile.uniform(kuhn)
    key = "P2:Q|c"
    a, b = kuhn.node_by_history("JQ;c"), kuhn.node_by_history("KQ;c")
    va, vb = state_value(prof, kuhn, a, P2), state_value(prof, kuhn, b, P2)
    assert infoset_value(prof, kuhn, key, {a: 0.25, b: 0.75}) == pytest.approx(0.25 * va + 0.75 * vb)
    assert infoset_value(prof, kuhn, "P1:K|", {kuhn.node_by_history("KJ"): 1.0,
                                               kuhn.node_by_history("KQ"): 0.0}) == pytest.approx(
        state_value(prof, kuhn, kuhn.node_by_history("KJ"), P1))
    with pytest.raises(StrategyError):
        infoset_value(prof, kuhn, key, {a: 1.0})


def test_reach_weights_root_and_rps(rps):
    prof = StrategyProfile(rps_strategy(rps, P1, EQ), rps_strategy(rps, P2, EQ))
    root = reach_weights(prof, rps, "")
    assert root[P1].weights == {0: 1.0}
    after = reach_weights(prof, rps, "?")[P2].normalized()
    np.testing.assert_allclose([after[rps.node_by_history(a)] for a in "RPS"], EQ)


def test_reach_weights_kuhn_bayes(kuhn):
    bet = {"J": 0.3, "Q": 0.1, "K": 0.9}
    s1 = {f"P1:{c}|": np.array([1 - p, p]) for c, p in bet.items()}
    s1.update({f"P1:{c}|cb": np.array([0.5, 0.5]) for c in "JQK"})
    s2 = {k: np.array([0.5, 0.5]) for k in oracles.kuhn_keys(1)}
    prof = kuhn_profile(kuhn, s1, s2)
    w = reach_weights(prof, kuhn, "b")[P2].normalized()
    # P2 holding Q: posterior over P1's card is proportional to its bet probability
    j, k = kuhn.node_by_history("JQ;b"), kuhn.node_by_history("KQ;b")
    assert w[j] / (w[j] + w[k]) == pytest.approx(0.3 / 1.2)
    assert sum(w.values()) == pytest.approx(1.0)


def test_bias_examples():
    s = BehavioralStrategy({"k": [0.2, 0.5, 0.3]}, {"k": ("f", "c", "b")})
    np.testing.assert_allclose(bias_strategy(s, "fold", 10)["k"], np.array([2.0, 0.5, 0.3]) / 2.8)
    np.testing.assert_array_equal(bias_strategy(s, "fold", 1)["k"], s["k"])
    np.testing.assert_array_equal(bias_strategy(s, None, 10)["k"], s["k"])
    z = BehavioralStrategy({"k": [0.0, 1.0]}, {"k": ("f", "c")})
    np.testing.assert_array_equal(bias_strategy(z, "fold", 10)["k"], [0.0, 1.0])
    with pytest.raises(StrategyError):
        bias_strategy(s, "fold", 0)


def test_bias_keeps_tied_best_response(rps):
    # vs P1 at (0.6, 0.2, 0.2), P2's Rock and Paper both earn 0.2 (Scissors earns -0.8), so
    # shifting weight between the two tied actions stays a best response
    x = np.array([0.6, 0.2, 0.2])
    values = -(x @ oracles.RPS_PLUS)
    best = values.max()
    base = rps_strategy(rps, P2, [0.5, 0.5, 0.0])
    for mult in (0.1, 3.0, 10.0):
        biased = bias_strategy(base, lambda a: a == "R", mult)
        assert biased["P2:|?"] @ values == pytest.approx(best)


def test_mixtures(kuhn, rps):
    comps = [rps_strategy(rps, P1, np.eye(3)[i]) for i in range(3)]
    np.testing.assert_allclose(mix_strategies(comps, EQ)["P1:|"], EQ)
    np.testing.assert_array_equal(mix_strategies(comps, [1, 0, 0])["P1:|"], [1, 0, 0])
    pures = list(oracles.kuhn_pure_strategies(0))
    a, b = pures[5], pures[42]
    opp = {k: np.array([0.5, 0.5]) for k in oracles.kuhn_keys(1)}
    acts = {I.key: I.actions for I in kuhn.infosets}
    sa = BehavioralStrategy(a, {k: acts[k] for k in a}, P1)
    sb = BehavioralStrategy(b, {k: acts[k] for k in b}, P1)
    mixed = realization_mixture(kuhn, [sa, sb], [0.5, 0.5], P1)
    v = oracles.kuhn_value({k: mixed[k] for k in a}, opp)
    assert v == pytest.approx(0.5 * oracles.kuhn_value(a, opp) + 0.5 * oracles.kuhn_value(b, opp))
    with pytest.raises(StrategyError):
        mix_strategies(comps, [0.5, 0.6, 0.0])


def test_sample_action():
    s = BehavioralStrategy({"k": [1.0, 0.0, 0.0], "h": [0.5, 0.5]})
    assert all(sample_action(s, "k", i) == 0 for i in range(50))
    rng = np.random.default_rng(3)
    draws = np.array([sample_action(s, "h", rng) for _ in range(10000)])
    assert abs(draws.mean() - 0.5) < 0.02
    with pytest.raises(KeyError):
        sample_action(s, "nope", 0)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), st.integers(0, 2 ** 16))
def test_sample_action_chi_squared(weights, seed):
    p = np.array(weights) / sum(weights)
    s = BehavioralStrategy({"k": p})
    rng = np.random.default_rng(seed)
    counts = np.bincount([sample_action(s, "k", rng) for _ in range(3000)], minlength=3)
    chi2 = float(((counts - 3000 * p) ** 2 / (3000 * p)).sum())
    assert chi2 < 18.4  # 2 degrees of freedom, p = 1e-4


def test_belief_state_zero_total():
    with pytest.raises(StrategyError):
        BeliefState({1: 0.0}).normalized()
