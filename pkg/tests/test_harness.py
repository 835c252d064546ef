import json
import math
import re

import numpy as np
import pytest

from miscale.dataio import load_matrix, write_idx_images
from miscale.entangle import bin_featurize, discrete_mi
from miscale.estimator import read_curve_csv
from miscale.exceptions import ConfigError, FormatError
from miscale.gmrf import GmrfModel, analytic_mi, sample
from miscale.grid import inner_square_partition
from miscale.harness import ExperimentConfig, plot_covariance_row, plot_curve, render_samples, resolve_config, run
from miscale.harness.cli import main
from miscale.harness.plots import read_series, sample_tiles

FAST_TRAIN = ["--hidden", "32,32", "--lr", "1e-3", "--epochs", "4", "--patience", "2"]


def cli(*args):
    return main([str(a) for a in args])


def write_curve(path, rows):
    lines = ["L,mi_mean_nats,mi_std_nats,n_trials,readout,flags"]
    lines += [f"{L},{m!r},{s!r},1,direct," for L, m, s in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def idx_fixture(tmp_path_factory):
    """Structured 8x8 byte images: a smooth GMRF field squashed to 0..255."""
    m = GmrfModel.from_family("nearest_neighbor", "8x8", -0.24)
    X = sample(m, 3000, 99)
    X = (X - X.min()) / (X.max() - X.min())
    imgs = np.round(X * 255).astype(np.uint8).reshape(-1, 8, 8)
    path = tmp_path_factory.mktemp("idx") / "fixture-idx3-ubyte"
    write_idx_images(path, imgs)
    return path


# --- configuration --------------------------------------------------------------

def test_resolve_layers(tmp_path):
    cfg = resolve_config()
    assert cfg == ExperimentConfig()
    assert cfg.Ls == list(range(1, 27)) and cfg.train["hidden_sizes"] == [512, 512]
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"shape": "6x6", "Ls": "1-3", "q": -0.2, "train": {"max_epochs": 7}}))
    cfg = resolve_config(path, {"Ls": "2,3", "seed": 5})
    assert (cfg.shape, cfg.Ls, cfg.q, cfg.seed) == ("6x6", [2, 3], -0.2, 5)
    assert cfg.train["max_epochs"] == 7 and cfg.train["learning_rate"] == 1e-4
    assert cfg.train_config().seed == 5


@pytest.mark.parametrize("bad", [
    {"shape": "6x6", "Ls": "1-6"},
    {"Ls": ""},
    {"kind": "nope"},
    {"family": "banded"},
    {"trials": 0},
    {"readout": "analytic", "kind": "gmrf_estimate"},
    {"kind": "data_estimate"},
    {"bogus": 1},
    {"train": {"widths": 3}},
    {"train": {"activation": "gelu"}},
    {"seed": -1},
    {"n_samples": 2.5},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        resolve_config(None, bad)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        resolve_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        resolve_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        resolve_config(bad)


def test_print_config_echoes_everything(tmp_path, capsys):
    assert cli("estimate", "--shape", "6x6", "--Ls", "1-2", "--epochs", "3", "--print-config") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "gmrf_estimate"
    assert set(out) == set(ExperimentConfig().to_dict())
    assert out["train"]["max_epochs"] == 3 and out["train"]["batch_size"] == 256
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(out))
    assert cli("curve", "--config", cfg_path, "--print-config") == 0
    assert json.loads(capsys.readouterr().out) == out


# --- exit codes -----------------------------------------------------------------

def test_exit_codes(tmp_path, capsys):
    assert cli("gmrf", "curve", "--shape", "4x4", "--Ls", "5", "--out", tmp_path / "a") == 2
    assert cli("gmrf", "curve", "--config", tmp_path / "none.json") == 2
    assert cli("fit-gauss", "--data", tmp_path / "none.idx", "--out", tmp_path / "b") == 2
    assert cli("gmrf", "curve", "--shape", "4x4", "--Ls", "1", "--q", "-0.3", "--out", tmp_path / "c") == 3
    trunc = tmp_path / "t.idx"
    trunc.write_bytes(bytes.fromhex("00000803000000020000000200000002") + b"\0\0")
    assert cli("fit-gauss", "--data", trunc, "--shape", "2x2", "--Ls", "1", "--out", tmp_path / "d") == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli("gmrf", "curve", "--shape", "4x4", "--Ls", "1", "--out", blocker / "sub") == 4
    assert cli("plot", "curve", write_curve(tmp_path / "x.csv", [(1, 0.5, 0.0)]).with_suffix(".nope")) == 4
    err = capsys.readouterr().err
    assert "config error" in err and "compute error" in err and "I/O error" in err
    with pytest.raises(SystemExit) as exc:
        cli("estimate", "--readout", "magic")
    assert exc.value.code == 2


# --- runs -----------------------------------------------------------------------

def test_analytic_run_artifacts(tmp_path):
    cfg = resolve_config(None, {"out": str(tmp_path), "q": -0.227})
    res = run(cfg)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["curve.csv", "curve.svg", "summary.json", "timing.json"]
    table = read_curve_csv(tmp_path / "curve.csv")
    assert table.L.tolist() == list(range(1, 27))
    assert set(table.readout) == {"analytic"} and np.all(table.std == 0)
    peak = int(np.argmax(table.mean))
    assert np.all(np.diff(table.mean[: peak + 1]) > 0)
    assert peak >= 20 and table.mean[peak:].min() > 0.9 * table.mean[peak]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"] == cfg.to_dict()
    assert summary["results"][0]["mi_mean_nats"] == table.mean[0]
    assert "seconds" not in (tmp_path / "summary.json").read_text()
    timing = json.loads((tmp_path / "timing.json").read_text())
    assert set(timing["per_L_seconds"]) == {str(L) for L in range(1, 27)}
    assert res.summary == summary


def test_failed_run_leaves_partial(tmp_path, idx_fixture):
    cfg = resolve_config(None, {"kind": "gaussian_fit", "data": str(idx_fixture), "shape": "6x6",
                                "Ls": [1], "out": str(tmp_path)})
    with pytest.raises(ConfigError):
        run(cfg)
    partial = json.loads((tmp_path / "summary.json.partial").read_text())
    assert "does not match" in partial["error"]
    assert not (tmp_path / "summary.json").exists() and not (tmp_path / "curve.csv").exists()


def test_runs_are_byte_reproducible(tmp_path):
    def go(name):
        out = tmp_path / name
        assert cli("estimate", "--shape", "4x4", "--q", "-0.2", "--Ls", "1-2", "--samples", "2000",
                   "--trials", "2", "--readout", "dv", "--seed", "11", "--out", tmp_path / "same",
                   *FAST_TRAIN) == 0
        (tmp_path / "same").rename(out)
        return {p.name: p.read_bytes() for p in out.iterdir() if p.name != "timing.json"}

    a, b = go("a"), go("b")
    assert sorted(a) == ["curve.csv", "curve.svg", "summary.json"]
    assert a == b
    summary = json.loads(a["summary.json"])
    assert summary["readout"] == "dv"
    assert all(len(r["direct_per_trial"]) == 2 for r in summary["results"])
    assert all("analytic_nats" in r for r in summary["results"])


def test_seed_changes_estimates(tmp_path):
    outs = []
    for seed in (1, 2):
        out = tmp_path / str(seed)
        assert cli("estimate", "--shape", "4x4", "--q", "-0.24", "--Ls", "2", "--samples", "4000",
                   "--seed", seed, "--out", out, "--no-plot", *FAST_TRAIN) == 0
        outs.append(json.loads((out / "summary.json").read_text())["results"][0]["direct_per_trial"])
    assert outs[0] != outs[1]


@pytest.mark.slow
def test_gmrf_estimate_smoke_default_training(tmp_path):
    assert cli("estimate", "--shape", "6x6", "--q", "-0.2", "--Ls", "1-3", "--samples", "10000",
               "--trials", "2", "--out", tmp_path) == 0
    table = read_curve_csv(tmp_path / "curve.csv")
    assert table.L.tolist() == [1, 2, 3]
    assert np.all(table.std > 0) and np.all(table.n_trials == 2)


def test_data_estimate_on_idx_fixture(tmp_path, idx_fixture, capsys):
    assert cli("estimate", "--data", idx_fixture, "--shape", "8x8", "--Ls", "2,3", "--trials", "2",
               "--out", tmp_path, *FAST_TRAIN) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["kind"] == "data_estimate"
    assert summary["dataset"].startswith("idx:") and summary["dataset"].endswith("rows=3000")
    table = read_curve_csv(tmp_path / "curve.csv")
    assert np.all(np.isfinite(table.mean)) and np.all(table.mean > 0)
    assert "L=  2" in capsys.readouterr().out


def test_fit_gauss_matches_analytic(tmp_path):
    sample_path = tmp_path / "s.bin"
    assert cli("gmrf", "sample", "--shape", "6x6", "--q", "-0.2", "--samples", "40000", "--seed", "3",
               sample_path) == 0
    X = load_matrix(sample_path)
    assert X.shape == (40000, 36) and X.dtype == np.float32
    assert cli("fit-gauss", "--data", sample_path, "--data-format", "matrix", "--shape", "6x6", "--Ls", "1-2",
               "--ridge", "0", "--out", tmp_path / "fit") == 0
    table = read_curve_csv(tmp_path / "fit" / "curve.csv")
    m = GmrfModel.from_family("nearest_neighbor", "6x6", -0.2)
    truth = [analytic_mi(m.covariance, inner_square_partition("6x6", L)) for L in (1, 2)]
    np.testing.assert_allclose(table.mean, truth, rtol=0.05)
    assert set(table.readout) == {"gaussian_fit"}


def test_fit_gauss_on_idx(tmp_path, idx_fixture):
    assert cli("fit-gauss", "--data", f"{idx_fixture},{idx_fixture}", "--shape", "8x8", "--Ls", "1-3",
               "--max-rows", "2500", "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["dataset"].endswith("rows=2500")
    assert np.all(np.diff(read_curve_csv(tmp_path / "curve.csv").mean) > 0)


def test_entangle_run(tmp_path, idx_fixture):
    assert cli("entangle", "--data", idx_fixture, "--shape", "8x8", "--Ls", "1-3", "--out", tmp_path) == 0
    rows = (tmp_path / "entanglement.csv").read_text().splitlines()
    assert rows[0] == "L,discrete_mi_nats,entropy_sqrt_probability_nats,entropy_sample_sum_nats,log_n_nats,n_rows"
    vals = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    assert vals[:, 0].tolist() == [1, 2, 3]
    assert np.all(vals[:, 1] <= vals[:, 2] + 1e-9)
    assert np.all(vals[:, 2:4] <= math.log(3000) + 1e-9)
    table = read_curve_csv(tmp_path / "curve.csv")
    np.testing.assert_array_equal(table.mean, vals[:, 1])
    assert set(table.readout) == {"discrete"}


def test_entangle_on_gmrf_samples(tmp_path):
    assert cli("entangle", "--shape", "4x4", "--q", "-0.24", "--Ls", "1-2", "--samples", "500", "--bins", "4",
               "--out", tmp_path, "--no-plot") == 0
    table = read_curve_csv(tmp_path / "curve.csv")
    assert np.all(table.mean > 0)
    assert not (tmp_path / "curve.svg").exists()


def test_gmrf_build(tmp_path):
    assert cli("gmrf", "build", "--shape", "3x3", "--q", "-0.2", "--out", tmp_path) == 0
    Q = load_matrix(tmp_path / "precision.csv")
    S = load_matrix(tmp_path / "covariance.csv")
    np.testing.assert_allclose(Q @ S, np.eye(9), atol=1e-12)
    info = json.loads((tmp_path / "model.json").read_text())
    assert info["n"] == 9 and info["diagonally_dominant"] is True


# --- figures --------------------------------------------------------------------

def test_svg_single_point(tmp_path):
    svg = tmp_path / "one.svg"
    plot_curve(write_curve(tmp_path / "one.csv", [(3, 0.7, 0.1)]), svg)
    text = svg.read_text()
    assert text.count("<circle") == 1 and "<polyline" not in text
    assert '<svg xmlns="http://www.w3.org/2000/svg" version="1.1"' in text


def test_svg_labels_band_and_no_scripts(tmp_path):
    svg = tmp_path / "c.svg"
    plot_curve(write_curve(tmp_path / "c.csv", [(1, 0.2, 0.05), (2, 0.5, 0.1), (3, 0.7, 0.0)]), svg)
    text = svg.read_text()
    assert ">L</text>" in text and ">MI (nats)</text>" in text
    assert 'fill-opacity="0.25"' in text and text.count("<polyline") == 1
    assert "<script" not in text.lower() and not re.search(r"\son[a-z]+=", text)
    plot_curve(tmp_path / "c.csv", svg, band=False)
    assert "<polygon" not in svg.read_text()


def test_svg_zero_std_band_degenerates(tmp_path):
    svg = tmp_path / "z.svg"
    plot_curve(write_curve(tmp_path / "z.csv", [(1, 0.2, 0.0), (2, 0.4, 0.0)]), svg)
    poly = re.search(r'<polygon points="([^"]+)"', svg.read_text()).group(1).split()
    line = re.search(r'<polyline points="([^"]+)"', svg.read_text()).group(1).split()
    assert poly[:2] == line and poly[2:] == line[::-1]


def test_svg_overlay_series(tmp_path, capsys):
    svg = tmp_path / "both.svg"
    a = write_curve(tmp_path / "a.csv", [(1, 0.2, 0.0), (2, 0.4, 0.0)])
    b = write_curve(tmp_path / "b.csv", [(1, 0.25, 0.05), (2, 0.35, 0.05)])
    assert cli("plot", "curve", a, "--svg", svg, "--series", "analytic") == 0
    assert cli("plot", "curve", b, "--svg", svg, "--series", "estimate", "--overlay") == 0
    assert [s["name"] for s in read_series(svg)] == ["analytic", "estimate"]
    assert svg.read_text().count("<polyline") == 2
    assert cli("plot", "curve", b, "--svg", svg, "--series", "estimate", "--overlay") == 0
    assert len(read_series(svg)) == 2
    assert cli("plot", "curve", b, "--svg", svg) == 0
    assert [s["name"] for s in read_series(svg)] == ["direct"]


def test_svg_malformed_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("L,mean\n1,2\n")
    with pytest.raises(FormatError):
        plot_curve(bad, tmp_path / "bad.svg")
    assert cli("plot", "curve", bad) == 4


def test_covariance_row_images(tmp_path):
    img = plot_covariance_row(np.eye(25), "5x5", 12, tmp_path / "eye.png")
    assert np.count_nonzero(img) == 1 and img[2, 2] == 1.0
    nn = plot_covariance_row(GmrfModel.from_family("nearest_neighbor", "5x5", -0.24), "5x5", 12, tmp_path / "nn.png")
    order = np.argsort(nn.ravel())[::-1]
    assert order[0] == 12 and set(order[1:5]) == {7, 11, 13, 17}
    uni = plot_covariance_row(GmrfModel.from_family("uniform", "5x5", -0.01), "5x5", 12, tmp_path / "u.png")
    off = np.delete(uni.ravel(), 12)
    assert np.ptp(off) < 1e-12 * off.max() and off.max() > 0
    with pytest.raises(ValueError):
        plot_covariance_row(np.eye(25), "5x5", 25, tmp_path / "bad.png")


@pytest.mark.parametrize("suffix", ["png", "svg"])
def test_covariance_plot_bytes_reproducible(tmp_path, suffix):
    paths = [tmp_path / f"{k}.{suffix}" for k in range(2)]
    for p in paths:
        assert cli("plot", "cov", "--shape", "6x6", "--q", "-0.2", p) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_sample_tiles(tmp_path):
    X = sample(GmrfModel.from_precision(np.eye(16)), 9, 0)
    canvas = sample_tiles(X, "4x4")
    assert canvas.shape == (3 * 5 + 1, 3 * 5 + 1)
    tile = canvas[1:5, 1:5]
    assert tile.min() == 0.0 and tile.max() == 1.0
    # white noise: neighbouring pixels uncorrelated on average
    big = sample(GmrfModel.from_precision(np.eye(64)), 4000, 1).reshape(-1, 8, 8)
    r = np.corrcoef(big[:, :, :-1].ravel(), big[:, :, 1:].ravel())[0, 1]
    assert abs(r) < 0.02
    render_samples(X, "4x4", tmp_path / "t.png")
    assert (tmp_path / "t.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_sample_images_reproducible(tmp_path, idx_fixture):
    paths = [tmp_path / f"{k}.png" for k in range(3)]
    for p in paths[:2]:
        assert cli("plot", "samples", "--shape", "6x6", "--seed", "4", "--count", "9", p) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert cli("plot", "samples", "--shape", "6x6", "--seed", "5", "--count", "9", paths[2]) == 0
    assert paths[2].read_bytes() != paths[0].read_bytes()
    assert cli("plot", "samples", "--shape", "8x8", "--data", idx_fixture, "--data-format", "idx",
               tmp_path / "d.png") == 0


def test_plot_cov_from_fitted_data(tmp_path, idx_fixture):
    assert cli("plot", "cov", "--shape", "8x8", "--data", idx_fixture, "--data-format", "idx",
               tmp_path / "fit.png") == 0
    assert (tmp_path / "fit.png").stat().st_size > 0


def test_entanglement_curve_matches_module(idx_fixture):
    from miscale.dataio import load_idx_images, rescale_unit
    from miscale.harness.run import entanglement_curve

    X = rescale_unit(load_idx_images(idx_fixture)).images
    curve, rows = entanglement_curve(X, "8x8", [2], 2)
    d = bin_featurize(X, 2, "8x8")
    assert rows[0][1] == discrete_mi(d, inner_square_partition("8x8", 2))
    assert curve.means[0] == rows[0][1]
