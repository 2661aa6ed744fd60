import json
from importlib import resources

import pytest

from hameng.cli import CONFIG_SCHEMA, ConfigError, main, validate_config
from hameng.model import ControlSegment, ControlSequence, random_sequence, write_sequence_csv


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_cspace_default(tmp_path, capsys):
    code, out = run(capsys, "cspace", "--out", tmp_path)
    assert code == 0
    assert "dims: 3, 3, 5 (composite 11)" in out.out
    assert json.loads((tmp_path / "cspace.json").read_text())["total"] == 11
    meta = json.loads((tmp_path / "cspace.meta.json").read_text())
    assert meta["command"] == "cspace" and "config_hash" in meta


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, {"network": {"n": 3, "bogus": 1}})
    code, out = run(capsys, "cspace", "--config", cfg, "--out", tmp_path)
    assert code == 2
    assert "bogus" in out.err


def test_validate_config_rejects_bad_search():
    with pytest.raises(ConfigError):
        validate_config({"search": {"q_min": 10, "q_max": 4}})
    assert CONFIG_SCHEMA["additionalProperties"] is False


def test_bad_arguments(tmp_path, capsys):
    assert run(capsys, "cspace", "--threads", 0, "--out", tmp_path)[0] == 2
    assert run(capsys, "cspace", "--seed", -1, "--out", tmp_path)[0] == 2
    assert run(capsys, "nonsense")[0] == 2


def test_graphs_command(tmp_path, capsys):
    code, out = run(capsys, "graphs", "--order", 2, "--out", tmp_path)
    assert code == 0 and "7 graphs" in out.out
    code, out = run(capsys, "graphs", "-r", 3, "--components", "coupling", "--out", tmp_path)
    assert code == 0 and "3 graphs" in out.out


def test_feasible_and_infeasible(tmp_path, capsys):
    ok = write(tmp_path, {"design": {"decouple": ["{11,12}"],
                                     "targets": {"{12,13}": {"XYZ": 1, "XZY": 1, "YXZ": 1,
                                                             "YZX": 1, "ZXY": 1, "ZYX": 1}},
                                     "t_prime": None}})
    code, out = run(capsys, "feasible", "--config", ok, "--out", tmp_path)
    assert code == 0 and out.out.strip().endswith("feasible")
    bad = write(tmp_path, {"design": {"targets": {"{11,12}": {"XYZ": 1}}}}, "bad.json")
    code, out = run(capsys, "feasible", "--config", bad, "--out", tmp_path)
    assert code == 3 and "infeasible" in out.out


def test_cross_term_config_is_feasible(tmp_path, capsys):
    cfg = str(resources.files("hameng") / "data" / "crossterm.json")
    code, out = run(capsys, "feasible", "--config", cfg, "--out", tmp_path)
    assert code == 0
    assert out.out.strip().endswith("feasible")


def test_bad_graph_label(tmp_path, capsys):
    cfg = write(tmp_path, {"network": {"n": 2}, "design": {"decouple": ["{13,12}"]}})
    code, out = run(capsys, "feasible", "--config", cfg, "--out", tmp_path)
    assert code == 2


def _small_design(**search):
    return {"network": {"n": 2, "error": False},
            "control": {"endpoint_rule": True},
            "cspace": {"components": ["detuning"]},
            "design": {"thresholds": {"pri": 1e-6, "f0": 1e-3}},
            "search": {"q_min": 8, "q_max": 8, "seed": 2, **search}}


def test_design_converges(tmp_path, capsys):
    cfg = write(tmp_path, _small_design(max_evals=20000))
    code, out = run(capsys, "design", "--config", cfg, "--out", tmp_path)
    assert code == 0, out.out
    assert (tmp_path / "sequence.csv").exists() and (tmp_path / "trace.jsonl").exists()
    meta = json.loads((tmp_path / "design.meta.json").read_text())
    assert meta["converged"] and meta["terms"]["f0"] <= 1e-3


def test_design_not_converged(tmp_path, capsys):
    cfg = write(tmp_path, _small_design(max_evals=30))
    code, _ = run(capsys, "design", "--config", cfg, "--out", tmp_path)
    assert code == 4


def test_verify_shipped_decoupling_sequence(tmp_path, capsys):
    data = resources.files("hameng") / "data"
    code, out = run(capsys, "verify", data / "decoupling_sequence.csv", "--config",
                    data / "decoupling.json", "--out", tmp_path)
    assert code == 0
    assert out.out.count("PASS") == 3 and "FAIL" not in out.out
    assert "parity residual r=2" in out.out


def test_verify_shipped_crossterm_sequence(tmp_path, capsys):
    data = resources.files("hameng") / "data"
    code, out = run(capsys, "verify", data / "crossterm_sequence.csv", "--config",
                    data / "crossterm.json", "--out", tmp_path)
    assert code == 0
    assert out.out.count("PASS") == 7 and "FAIL" not in out.out
    meta = json.loads((data / "crossterm_sequence.meta.json").read_text())
    assert meta["converged"] and f"T'={meta['t_prime']['{11,12}']:.4g}" in out.out


def test_verify_unreadable_sequence(tmp_path, capsys):
    (tmp_path / "x.csv").write_text("nope\n")
    code, _ = run(capsys, "verify", tmp_path / "x.csv", "--out", tmp_path)
    assert code == 2


def test_simulate_writes_csv_and_meta(tmp_path, capsys, rng):
    seq = tmp_path / "seq.csv"
    write_sequence_csv(random_sequence(rng, 4), seq)
    cfg = write(tmp_path, {"network": {"n": 2},
                           "ensemble": {"sigma_dip_khz": 5, "sigma_z_khz": 2.5, "seed": 3},
                           "simulation": {"k_max": 10, "n_realizations": 4,
                                          "horizons_ms": [0.01]}})
    code, out = run(capsys, "simulate", seq, tmp_path / "missing.csv", "--config", cfg,
                    "--out", tmp_path)
    assert code == 0
    assert "skip" in out.out
    csv = (tmp_path / "seq__base.csv").read_text().splitlines()
    assert csv[0] == "t_ms,S_mean,S_stderr" and len(csv) == 12
    assert json.loads((tmp_path / "seq__base.meta.json").read_text())["seed"] == 3


def test_symmetrize_command(tmp_path, capsys, rng):
    from conftest import identity_cycle

    good = tmp_path / "good.csv"
    write_sequence_csv(identity_cycle(rng, 6), good)
    code, out = run(capsys, "symmetrize", good, "--out", tmp_path)
    assert code == 0 and (tmp_path / "good_sym.csv").exists()
    bad = tmp_path / "bad.csv"
    write_sequence_csv(ControlSequence((ControlSegment(1.0, 1.0, 0.0, 0.0),)), bad)
    code, out = run(capsys, "symmetrize", bad, "--out", tmp_path)
    assert code == 2


def test_probe_command(tmp_path, capsys):
    cfg = write(tmp_path, {"network": {"n": 2}, "probe": {"n_sequences": 20, "q": 5}})
    code, out = run(capsys, "probe", "--order", 1, "--config", cfg, "--out", tmp_path)
    assert code == 0 and "spanned dimension 11 of 11" in out.out
