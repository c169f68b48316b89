import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hgobs.cli import main
from hgobs.matstack import root_match_error
from hgobs.vdp import VDP_LADDER, VDP_ROOTS

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_design_gains_two_roots(tmp_path, capsys):
    cfg = write(tmp_path, "g.yaml", "n: 2\nroots: [-1, -2]\n")
    assert main(["design-gains", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert "K1          : (3, 2)" in capsys.readouterr().out
    data = json.loads((tmp_path / "gains.json").read_text())
    assert data["ladder"] == [[3.0, 2.0]]


def test_design_gains_vdp_roots(tmp_path):
    assert main(["design-gains", "--config", str(CONFIGS / "design_vdp.yaml"), "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "gains.json").read_text())
    for (a, b), (pa, pb) in zip(data["ladder"], VDP_LADDER):
        assert float(f"{a:.2g}") == float(f"{pa:.2g}") and float(f"{b:.2g}") == float(f"{pb:.2g}")
    eig = [complex(*z) for z in data["eigenvalues"]]
    assert root_match_error(eig, VDP_ROOTS) <= 1e-6
    assert data["positivity"] and len(data["stages"]) == 3


def test_design_gains_non_hurwitz_warns(tmp_path, capsys):
    cfg = write(tmp_path, "g.yaml", "roots: [1, -2, -3, -4]\n")
    assert main(["design-gains", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert "not Hurwitz" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path):
    assert main(["design-gains", "--out", str(tmp_path)]) == 2
    assert main(["design-gains", "--config", str(tmp_path / "missing.yaml")]) == 2
    bad = write(tmp_path, "b.yaml", "roots: [-1, -2]\nextra: 1\n")
    assert main(["design-gains", "--config", str(bad)]) == 2
    odd = write(tmp_path, "o.yaml", "roots: [-1, -2, -3]\n")
    assert main(["design-gains", "--config", str(odd)]) == 2
    unstable = write(tmp_path, "u.yaml", "plant: {kind: linear, Phi: [0, 0]}\nx0: [1, 0]\n"
                     "observers: [{kind: standard, gains: [-1, 2]}]\n")
    assert main(["simulate", "--config", str(unstable), "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_3(tmp_path):
    # Lambda((1, 0), 1) vanishes while m_4 does not: sigma2 has a zero denominator
    cfg = write(tmp_path, "g.yaml", "coeffs: [1, 1, 0, 0, 1]\n")
    assert main(["design-gains", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_divergence_exit_4(tmp_path, capsys):
    cfg = write(tmp_path, "d.yaml", "plant: {kind: linear, Phi: [0, 30]}\nx0: [1, 1]\n"
                "observers: [{kind: standard, gains: [3, 2]}]\nsim: {h: 0.01, T: 10}\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 4
    assert "(t = " in capsys.readouterr().err


def test_simulate_matched_init_zero_errors(tmp_path):
    cfg = write(tmp_path, "m.yaml", "plant: {kind: linear, Phi: [0, 0, 0]}\nx0: [1, -0.5, 0.25]\n"
                "observers:\n"
                "  - {label: s, kind: standard, ell: 10, gains: [3, 3, 1], init: match}\n"
                "  - {label: l, kind: limited, ell: 10, gains: [[2, 1], [2, 1]], init: match}\n"
                "sim: {h: 0.001, T: 1.0}\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "trace.csv")))
    err_cols = [k for k in rows[0] if k.startswith("err_")]
    assert err_cols
    assert max(abs(float(r[k])) for r in rows for k in err_cols) <= 1e-12


def test_simulate_linear_decay_scales_with_ell(tmp_path):
    rates = []
    for ell in (5, 10, 20):
        cfg = write(tmp_path, f"s{ell}.yaml", "plant: {kind: linear, Phi: [0, 0]}\nx0: [1, 0.5]\n"
                    f"observers: [{{label: s, kind: standard, ell: {ell}, gains: [3, 2]}}]\n"
                    f"sim: {{h: 0.001, T: {40 / ell}}}\n")
        out = tmp_path / f"o{ell}"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        rates.append(json.loads((out / "summary.json").read_text())["xhat"]["decay_rate"])
    assert rates[1] / rates[0] == pytest.approx(2.0, rel=0.2)
    assert rates[2] / rates[1] == pytest.approx(2.0, rel=0.2)


def test_sensitivity_command(tmp_path, capsys):
    cfg = write(tmp_path, "s.yaml", "Phi: [0, 0, 0]\nell: 10\nroots_std: [-1, -2, -3]\n"
                "roots_new: [-1, -2, -3, -4]\n")
    assert main(["sensitivity", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "sensitivity_summary.json").read_text())["channels"]
    assert [c["r_prime"] for c in summary] == [c["r_new"] for c in summary] == [1, 2, 2]
    assert abs(summary[0]["slope"]) < 0.1
    for c in summary:
        assert c["slope"] <= -(c["r_prime"] - 1) + 0.1
    assert (tmp_path / "sensitivity_ch3.csv").exists()


def test_sensitivity_vdp_config(tmp_path):
    assert main(["sensitivity", "--config", str(CONFIGS / "sensitivity_n5.yaml"), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sensitivity_ch2.csv")))
    assert float(rows[0]["omega"]) == pytest.approx(1e3)
    assert float(rows[0]["ratio"]) < 0.1


def test_vdp_bench_short(tmp_path):
    cfg = write(tmp_path, "v.yaml", "T_clean: 0.5\nT_noisy: 0.5\n")
    assert main(["vdp-bench", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "vdp_summary.json").read_text())
    assert len(summary["normalized_asymptotic_errors"]) == 15
    assert summary["config"]["ell"] == 100.0


def test_vdp_bench_no_noise_and_ell_override(tmp_path):
    cfg = write(tmp_path, "v.yaml", "T_clean: 0.5\n")
    assert main(["vdp-bench", "--config", str(cfg), "--out", str(tmp_path), "--no-noise", "--l", "10"]) == 0
    summary = json.loads((tmp_path / "vdp_summary.json").read_text())
    assert "normalized_asymptotic_errors" not in summary
    assert summary["config"]["ell"] == 10.0
    assert (tmp_path / "fig1_errors.csv").exists() and (tmp_path / "fig2_errors.csv").exists()
    assert not (tmp_path / "vdp_noisy_trace.csv").exists()


def test_deterministic_output(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(CONFIGS / "simulate_linear.yaml"), "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hgobs", "design-gains", "--config",
                          str(CONFIGS / "design_vdp.yaml"), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "positivity  : True" in res.stdout
    assert np.isfinite(json.loads((tmp_path / "gains.json").read_text())["residual"])
