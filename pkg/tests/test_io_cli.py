import json
import subprocess
import sys

import numpy as np
import pytest

from mlcouple import (MalformedFile, McmcConfig, MLParams, Theta, builtin_region,
                      simulate_deterministic)
from mlcouple import io
from mlcouple.cli import main
from mlcouple.smooth import default_span_grid, gcv_scores
from mlcouple.sim import VoltageTrace


def run(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def write(path, text):
    path.write_text(text)
    return path


def test_trace_round_trip(tmp_path):
    tr = simulate_deterministic(MLParams(), t_end=20.0, record_every=7)
    io.write_trace_csv(tmp_path / "a.csv", tr)
    back = io.read_trace_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.states(), tr.states())
    np.testing.assert_array_equal(back.times, tr.times)
    short = VoltageTrace(tr.times, tr.v1, tr.v2)
    io.write_trace_csv(tmp_path / "b.csv", short)
    back = io.read_trace_csv(tmp_path / "b.csv")
    assert not back.has_gating
    np.testing.assert_array_equal(back.v2, tr.v2)


def test_power_region_chain_round_trip(tmp_path):
    from mlcouple import PowerCurve, run_chain

    c = PowerCurve(np.array([0.0, 0.1, 0.2]), np.array([0.0, 1 / 3, 2 / 3]))
    io.write_power_csv(tmp_path / "p.csv", c)
    back = io.read_power_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.P, c.P)
    region = builtin_region()
    io.write_region_csv(tmp_path / "r.csv", region)
    r2 = io.read_region_csv(tmp_path / "r.csv")
    np.testing.assert_array_equal(r2.boundary, region.boundary)
    assert r2.area == region.area
    chain = run_chain(None, McmcConfig(iterations=30, burn_in=5), lambda th: -th.I_app / 100)
    io.write_chain_csv(tmp_path / "c.csv", chain)
    d = io.read_chain_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(d["theta"], chain.thetas())
    np.testing.assert_array_equal(d["log_post"], chain.log_posteriors())
    np.testing.assert_array_equal(d["accepted"], chain.accepted())
    assert d["iter"].tolist() == list(range(31))
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header == "iter,accepted,log_post,Iapp,gsyn,pscale1,pscale2,pleak1,pleak2,mstd1,mstd2"


@pytest.mark.parametrize("text", [
    "", "t,v1\n0,1\n", "t,v1,v2\n0,1,x\n", "t,v1,v2\n0,1,2\n1,2\n", "t,v1,v2,w1\n0,1,2,3\n1,1,1,1\n",
    "t,v1,v2,zz\n0,1,2,3\n1,2,3,4\n", "t,v1,v2\n1,1,2\n0,1,2\n",
])
def test_malformed_traces(tmp_path, text):
    with pytest.raises(MalformedFile):
        io.read_trace_csv(write(tmp_path / "bad.csv", text))


def test_params_json(tmp_path):
    p = io.load_params_json(write(tmp_path / "p.json", '{"I_app": 97.5, "g_syn": 0.2}'))
    assert (p.I_app, p.g_syn, p.C) == (97.5, 0.2, 20.0)
    with pytest.raises(MalformedFile):
        io.load_params_json(write(tmp_path / "q.json", '{"Iapp": 97.5}'))
    with pytest.raises(MalformedFile):
        io.load_params_json(write(tmp_path / "r.json", '{"I_app": '))


def test_config_json_round_trip(tmp_path):
    cfg = McmcConfig(initial_theta=Theta(200.0, 2.0, mstd1=5.0), mixing=[0.02] * 8,
                     iterations=77, burn_in="auto", seed=9, greedy=True)
    io.write_json(tmp_path / "c.json", io.config_to_dict(cfg))
    back = io.config_from_dict(io.read_json(tmp_path / "c.json"))
    assert back.initial_theta == cfg.initial_theta
    assert (back.iterations, back.burn_in, back.seed, back.greedy) == (77, "auto", 9, True)
    np.testing.assert_array_equal(back.mixing_vector(), cfg.mixing_vector())
    assert back.likelihood.params == cfg.likelihood.params
    with pytest.raises(MalformedFile):
        io.config_from_dict({"iters": 3})
    with pytest.raises(MalformedFile):
        io.config_from_dict({"likelihood": {"span": 0.1}})


def test_cli_simulate_labels(tmp_path, capsys):
    code, out = run(["simulate", "--iapp", 97.5, "--gsyn", 0.15, "--ic", "-3,-20,0,0.17,0,0",
                     "--out", tmp_path / "aas.csv"], capsys)
    assert code == 0 and "label: AAS anti-phase" in out.out
    code, out = run(["simulate", "--iapp", 95.5, "--gsyn", 0.15, "--out", tmp_path / "ss.csv"],
                    capsys)
    assert code == 0 and "label: SS" in out.out
    m = json.loads((tmp_path / "ss.manifest.json").read_text())
    assert m["command"] == "simulate" and m["label"]["kind"] == "SS"
    assert str(tmp_path / "ss.csv") in m["outputs"]
    assert str(tmp_path / "ss.manifest.json") in m["outputs"]


def test_cli_stochastic_reproducible(tmp_path, capsys):
    args = ["simulate", "--delta", 0.7, "--gsyn", 0.15, "--iapp", 95, "--seed", 1]
    run(args + ["--out", tmp_path / "a.csv"], capsys)
    run(args + ["--out", tmp_path / "b.csv"], capsys)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    run(["simulate", "--delta", 0.7, "--gsyn", 0.15, "--iapp", 95, "--seed", 2,
         "--out", tmp_path / "c.csv"], capsys)
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_cli_simulate_errors(tmp_path, capsys):
    assert run(["simulate", "--iapp", 1e7, "--out", tmp_path / "x.csv"], capsys)[0] == 3
    assert run(["simulate", "--ic", "1,2", "--out", tmp_path / "x.csv"], capsys)[0] == 2
    assert run(["simulate", "--gsyn", -1, "--out", tmp_path / "x.csv"], capsys)[0] == 2
    assert run(["simulate", "--params", tmp_path / "missing.json"], capsys)[0] == 2
    assert run(["frobnicate"], capsys)[0] == 2


def test_cli_power_linear_is_zero(tmp_path, capsys):
    t = np.linspace(0, 10, 300)
    io.write_trace_csv(tmp_path / "lin.csv", VoltageTrace(t, 2 * t, -t + 3))
    code, _ = run(["power", tmp_path / "lin.csv", "--span", 0.05, "--out", tmp_path / "lin"],
                  capsys)
    assert code == 0
    for ch in ("v1", "v2"):
        P = io.read_power_csv(tmp_path / f"lin_{ch}.csv").P
        assert np.abs(P).max() < 1e-12


def test_cli_power_gcv_and_r2(tmp_path, capsys):
    tr = simulate_deterministic(MLParams(I_app=97.5, g_syn=0.2), t_end=2000.0, record_every=10)
    io.write_trace_csv(tmp_path / "eas.csv", tr)
    code, _ = run(["power", tmp_path / "eas.csv", "--gcv", "--out", tmp_path / "eas"], capsys)
    assert code == 0
    m = json.loads((tmp_path / "eas.manifest.json").read_text())
    grid = default_span_grid(len(tr), 2, max_span=0.05)
    for k, (ch, y) in enumerate((("v1", tr.v1), ("v2", tr.v2))):
        scores = gcv_scores(tr.times, y, grid)
        assert m["spans"][k] == pytest.approx(grid[int(np.nanargmin(scores))])
        assert m["channels"][ch]["r_squared"] > 0.99
    assert run(["power", write(tmp_path / "bad.csv", "t,v1\n0,1\n"), "--gcv"], capsys)[0] == 2


def test_cli_region(tmp_path, capsys):
    code, out = run(["region", "--point", "7.5,120", "--point", "10,150", "--area"], capsys)
    assert code == 0
    assert "point 7.5,120: inside" in out.out and "point 10,150: outside" in out.out
    area = float(out.out.split("area:")[1].split()[0])
    assert abs(area - 933.75) / 933.75 < 0.05
    write(tmp_path / "sq.csv", "gsyn,Iapp\n0,0\n1,0\n1,1\n0,1\n")
    code, out = run(["region", "--region", tmp_path / "sq.csv", "--point", "0.5,0.5"], capsys)
    assert code == 0 and "inside" in out.out
    bow = write(tmp_path / "bow.csv", "gsyn,Iapp\n0,0\n1,1\n1,0\n0,1\n")
    assert run(["region", "--region", bow], capsys)[0] == 2


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "fast.csv"
    tr = simulate_deterministic(MLParams(), t_end=200.0, record_every=10)
    io.write_trace_csv(path, tr)
    return path


def test_cli_estimate_zero_iterations(tmp_path, data_csv, capsys):
    code, _ = run(["estimate", data_csv, "--iterations", 0, "--truth", "120,7.5",
                   "--out-dir", tmp_path], capsys)
    assert code == 0
    d = io.read_chain_csv(tmp_path / "chain_seed0.csv")
    assert d["theta"].shape == (1, 8)
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["overall"]["I_app"]["mean"] == 220.0 and s["overall"]["g_syn"]["mean"] == 1.0
    assert s["overall"]["I_app"]["percent_error"] == pytest.approx(100 * 100 / 120)


def test_cli_estimate_manifest_replay(tmp_path, data_csv, capsys):
    argv = ["estimate", str(data_csv), "--iterations", "6", "--burn-in", "3", "--seeds", "4,5",
            "--no-region", "--out-dir", str(tmp_path / "a")]
    assert run(argv, capsys)[0] == 0
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["seeds"] == [4, 5] and m["config"]["use_rejection_region"] is False
    assert len(m["spans"]["data"]) == 2
    listed = {p for p in m["outputs"]}
    for name in ("chain_seed4.csv", "chain_seed5.csv", "summary.json", "manifest.json"):
        assert str(tmp_path / "a" / name) in listed
    replay = [a if a != str(tmp_path / "a") else str(tmp_path / "b") for a in m["argv"]]
    assert run(replay, capsys)[0] == 0
    for name in ("chain_seed4.csv", "chain_seed5.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_estimate_exit_codes(tmp_path, data_csv, capsys):
    assert run(["estimate", data_csv, "--iapp0", 300, "--gsyn0", 8,
                "--out-dir", tmp_path], capsys)[0] == 4
    tiny = tmp_path / "tiny.csv"
    write(tiny, "t,v1,v2\n0,1,2\n1,2,3\n2,0,1\n3,1,1\n")
    assert run(["estimate", tiny, "--out-dir", tmp_path], capsys)[0] == 5
    assert run(["estimate", write(tmp_path / "x.csv", "nope"), "--out-dir", tmp_path],
               capsys)[0] == 2
    cfg = write(tmp_path / "cfg.json", '{"iters": 5}')
    assert run(["estimate", data_csv, "--config", cfg, "--out-dir", tmp_path], capsys)[0] == 2
    assert run(["estimate", data_csv, "--chains", 3, "--seeds", "1,2",
                "--out-dir", tmp_path], capsys)[0] == 2


def test_cli_estimate_config_file(tmp_path, data_csv, capsys):
    cfg = write(tmp_path / "cfg.json", json.dumps(
        {"iterations": 4, "burn_in": 2, "seed": 7, "initial_theta": {"I_app": 150.0,
                                                                    "g_syn": 5.0}}))
    assert run(["estimate", data_csv, "--config", cfg, "--out-dir", tmp_path], capsys)[0] == 0
    d = io.read_chain_csv(tmp_path / "chain_seed7.csv")
    assert d["theta"][0, :2].tolist() == [150.0, 5.0] and d["theta"].shape[0] == 5


def test_cli_smooth_check(tmp_path, data_csv, capsys):
    code, out = run(["smooth-check"], capsys)
    assert code == 0 and "PASS" in out.out
    code, out = run(["smooth-check", "--trace", data_csv, "--spans", "0.02,0.05"], capsys)
    assert code == 0 and out.out.count("*") == 2


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "mlcouple.cli", "region", "--area"],
                       capture_output=True, text=True, check=True)
    assert "area: 931.3067" in r.stdout
