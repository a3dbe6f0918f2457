import json

import numpy as np
import pytest

from dlsolve.cli import EXIT_CODES, main
from dlsolve.depth_limited import leaf_beliefs
from dlsolve.games import build_game
from dlsolve.strategy import StrategyProfile


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


def error_of(err: str) -> dict:
    return json.loads(err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def kuhn_bp(tmp_path_factory):
    path = tmp_path_factory.mktemp("bp") / "kuhn.json"
    assert main(["train", "--game", "kuhn", "--iters", "2000", "--out", str(path)]) == 0
    return path


def test_train_kuhn_roundtrip(capsys, tmp_path):
    path = tmp_path / "k.json"
    code, res, _ = run(capsys, "train", "--game", "kuhn", "--iters", "100000", "--out", str(path))
    assert code == 0
    mbbg = res["exploitability"]["exploitability_mbbg"]
    assert mbbg < 5
    back = StrategyProfile.load(path)
    code, again, _ = run(capsys, "exploit", str(path), "--game", "kuhn")
    assert code == 0 and again["exploitability_mbbg"] == pytest.approx(mbbg, abs=1e-12)
    assert set(back.p1.keys()) == {"P1:J|", "P1:Q|", "P1:K|", "P1:J|cb", "P1:Q|cb", "P1:K|cb"}


def test_train_rps(capsys, tmp_path):
    path = tmp_path / "r.json"
    code, res, _ = run(capsys, "train", "--game", "rps_plus", "--iters", "10000", "--out", str(path))
    assert code == 0
    p1 = StrategyProfile.load(path).p1["P1:|"]
    assert np.abs(p1 - [0.4, 0.4, 0.2]).max() < 0.01


def test_train_checkpoints_and_config(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 2\n[train]\ngame = "kuhn"\niters = 40\ncheckpoint = 20\n')
    code, res, err = run(capsys, "train", "--config", str(cfg))
    assert code == 0 and res["iterations"] == 40
    assert [c["iteration"] for c in res["checkpoints"]] == [20, 40]
    assert len([ln for ln in err.splitlines() if ln.startswith("{")]) == 2
    # flags beat the config table
    code, res, _ = run(capsys, "train", "--config", str(cfg), "--iters", "10", "--checkpoint", "0")
    assert res["iterations"] == 10 and res["checkpoints"] == []


def test_seed_determinism(capsys, kuhn_bp):
    args = ["match", "--game", "kuhn", "--blueprint", str(kuhn_bp), "--agent-a", "blueprint",
            "--agent-b", "fold", "--hands", "200", "--seed", "9"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b
    _, c, _ = run(capsys, *args[:-1], "10")
    assert c["total_chips"] != a["total_chips"] or c["seeds"] != a["seeds"]
    args = ["train", "--game", "kuhn", "--variant", "mccfr_external", "--iters", "300", "--seed", "4"]
    assert run(capsys, *args)[1] == run(capsys, *args)[1]


def test_values_and_resolve(capsys, tmp_path, kuhn_bp):
    out = tmp_path / "v.json"
    code, res, _ = run(capsys, "values", "--game", "kuhn", "--blueprint", str(kuhn_bp), "--k", "3",
                       "--out", str(out))
    assert code == 0 and res["n"] == 3 and res["leaves"] == 12
    assert json.loads(out.read_text())["header"]["n"] == 3
    code, res, _ = run(capsys, "values", "--game", "kuhn", "--blueprint", str(kuhn_bp), "--k", "3",
                       "--approach", "selfgen", "--weaken", "--out", str(out))
    assert code == 0 and res["weakened"]
    recs = {h: np.array(v) for h, v in json.loads(out.read_text())["records"].items()}
    kuhn = build_game("kuhn")
    leaves = [kuhn.node_by_history(h) for h in recs]
    for key, bel in leaf_beliefs(kuhn, StrategyProfile.load(kuhn_bp).p1, leaves).items():
        p = np.array(list(bel.values()))
        p2_vals = p @ -np.stack([recs[kuhn.history[h]] for h in bel])
        assert (p2_vals[1:] <= p2_vals[0] + 1e-9).all(), key
    code, roll, _ = run(capsys, "values", "--game", "kuhn", "--blueprint", str(kuhn_bp), "--mode", "rollout")
    assert code == 0 and roll["n"] == 1
    code, res, _ = run(capsys, "resolve", "--game", "kuhn", "--blueprint", str(kuhn_bp), "--public", "c")
    assert code == 0
    for k, v in res["alt_values"].items():
        assert res["root_br_values"][k] <= v + 1e-6
    assert res["exploitability_after"]["br_vs_p1"] <= res["exploitability_before"]["br_vs_p1"] + 1e-9


def test_match_identical_and_fold(capsys, kuhn_bp):
    code, res, _ = run(capsys, "match", "--game", "kuhn", "--blueprint", str(kuhn_bp), "--agent-a", "blueprint",
                       "--hands", "100")
    assert code == 0 and res["mean_mbbg"] == 0.0
    code, res, err = run(capsys, "match", "--game", "kuhn", "--blueprint", str(kuhn_bp), "--hands", "3")
    assert code == EXIT_CODES["precondition"] and error_of(err)["error"] == "precondition"


def test_demo(capsys):
    code, res, err = run(capsys, "demo-rps", "--iters", "2000")
    assert code == 0 and res["single_valued"]["exploitability"] == pytest.approx(1.0)
    assert "multi-valued" in err


def test_error_categories(capsys, tmp_path, kuhn_bp):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nbogus = 1\n")
    assert run(capsys, "train", "--config", str(bad))[0] == EXIT_CODES["config"]
    broken = tmp_path / "broken.toml"
    broken.write_text("[train\n")
    assert run(capsys, "train", "--config", str(broken))[0] == EXIT_CODES["config"]
    code, _, err = run(capsys, "exploit", str(tmp_path / "missing.json"), "--game", "kuhn")
    assert code == EXIT_CODES["io"] and error_of(err)["error"] == "io"
    code, _, err = run(capsys, "exploit", str(kuhn_bp), "--game", "leduc")
    assert code == EXIT_CODES["precondition"]
    assert run(capsys, "train", "--iters", "0")[0] == EXIT_CODES["precondition"]
    assert run(capsys, "values", "--game", "kuhn")[0] == EXIT_CODES["config"]
    assert run(capsys, "resolve", "--game", "kuhn", "--blueprint", str(kuhn_bp), "--public", "zz")[0] == \
        EXIT_CODES["precondition"]
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_CODES["usage"]
