import json

import numpy as np
import pytest
from PIL import Image

from simlrp.benchmark import BenchmarkReport
from simlrp.cli import main
from simlrp.formats import save_pairs, save_tensor
from simlrp.network import Dense, NetworkGraph, ReLU, load_model, save_model
from simlrp.pairwise import load_explanation
from simlrp.tensor import Rng


@pytest.fixture(scope="module")
def toy_model(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "toy.json"
    assert main(["toy-train", "--seed", "1", "--iterations", "20", "--out", str(path)]) == 0
    return path


def write(path, data):
    path.write_bytes(data if isinstance(data, bytes) else data.encode())
    return str(path)


def small_image_net(tmp_path):
    rng = Rng(2)
    net = NetworkGraph([Dense(rng.standard_normal((48, 16)) * 0.3), ReLU(),
                        Dense(rng.standard_normal((16, 8)) * 0.3)], (48,), zero_bias=True)
    return write(tmp_path / "net.json", save_model(net))


def test_toy_train_writes_model(toy_model, capsys):
    net = load_model(toy_model.read_bytes())
    assert net.output_dim == 50
    assert net.meta["iterations"] == 20
    assert "embedding_seed" in net.meta


def test_toy_train_prints_loss(tmp_path, capsys):
    assert main(["toy-train", "--iterations", "3", "--out", str(tmp_path / "m.json")]) == 0
    assert capsys.readouterr().out.startswith("final_mse\t")


def test_toy_eval(toy_model, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["toy-eval", "--model", str(toy_model), "--gammas", "0,0.09", "--pairs", "5",
                 "--out", str(out)])
    assert code == 0
    captured = capsys.readouterr()
    assert captured.out.splitlines()[0] == "method\tgamma\tacs"
    assert "bilrp_beats_hp=" in captured.err
    report = BenchmarkReport.from_bytes(out.read_bytes())
    assert set(report.gamma_sweep) == {0.0, 0.09}
    for suffix in ("gamma", "acs", "example"):
        png = tmp_path / f"report-{suffix}.png"
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_toy_eval_without_figures(toy_model, tmp_path):
    out = tmp_path / "r.json"
    assert main(["toy-eval", "--model", str(toy_model), "--gammas", "0", "--pairs", "2",
                 "--out", str(out), "--no-figures"]) == 0
    assert not (tmp_path / "r-gamma.png").exists()


def test_explain_bilrp_gamma_zero_matches_hp(toy_model, tmp_path):
    rng = Rng(3)
    x = write(tmp_path / "x.json", save_tensor(rng.uniform(60)))
    xp = write(tmp_path / "xp.json", save_tensor(rng.uniform(60)))
    blocks = {}
    for method in ("bilrp", "hp"):
        out = tmp_path / f"{method}.json"
        assert main(["explain", "--model", str(toy_model), "--method", method,
                     "--gamma-schedule", "0", "--x", x, "--xprime", xp, "--dense",
                     "--out", str(out)]) == 0
        blocks[method] = load_explanation(out.read_bytes()).dense
    np.testing.assert_allclose(blocks["bilrp"], blocks["hp"], rtol=0, atol=1e-8)


@pytest.mark.parametrize("method", ["saliency", "curvature"])
def test_explain_baselines(toy_model, tmp_path, method):
    x = write(tmp_path / "x.json", save_tensor(np.ones(60)))
    out = tmp_path / "e.json"
    assert main(["explain", "--model", str(toy_model), "--method", method, "--x", x,
                 "--xprime", x, "--out", str(out)]) == 0
    doc = json.loads(out.read_bytes())
    assert doc["method"] == method.capitalize()


def test_explain_with_zb_and_schedule(toy_model, tmp_path):
    x = write(tmp_path / "x.json", save_tensor(Rng(4).uniform(60)))
    out = tmp_path / "e.json"
    assert main(["explain", "--model", str(toy_model), "--method", "bilrp",
                 "--gamma-schedule", "0.1,4=0", "--zb", "0,1", "--x", x, "--xprime", x,
                 "--out", str(out)]) == 0
    meta = load_explanation(out.read_bytes()).meta
    assert meta["gamma_schedule"]["default"] == 0.1


def test_render_from_tensor_images(tmp_path, capsys):
    net = small_image_net(tmp_path)
    rng = Rng(5)
    xa, xb = rng.uniform((3, 4, 4)), rng.uniform((3, 4, 4))
    fa = write(tmp_path / "a.json", save_tensor(xa))
    fb = write(tmp_path / "b.json", save_tensor(xb))
    expl = tmp_path / "e.json"
    assert main(["explain", "--model", net, "--method", "bilrp", "--gamma-schedule", "0.25",
                 "--x", fa, "--xprime", fb, "--out", str(expl)]) == 0
    # the net reads flattened inputs but the file keeps the image shapes for rendering
    doc = json.loads(expl.read_bytes())
    assert doc["shape_x"] == [3, 4, 4]
    svg = tmp_path / "out.svg"
    args = ["render", "--explanation", str(expl), "--params", "2,0.1,3,1",
            "--images", f"{fa},{fb}", "--out", str(svg)]
    assert main(args) == 0
    first = svg.read_bytes()
    assert first.startswith(b"<svg")
    assert capsys.readouterr().out.startswith("connections\t")
    assert main(args) == 0
    assert svg.read_bytes() == first


def test_render_from_png(tmp_path):
    net = small_image_net(tmp_path)
    x = write(tmp_path / "x.json", save_tensor(Rng(6).uniform((3, 4, 4))))
    expl = tmp_path / "e.json"
    assert main(["explain", "--model", net, "--method", "saliency", "--x", x, "--xprime", x,
                 "--out", str(expl)]) == 0
    png = tmp_path / "img.png"
    Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(png)
    assert main(["render", "--explanation", str(expl), "--params", "2,0,1,1",
                 "--images", f"{png},{png}", "--out", str(tmp_path / "o.svg")]) == 0
    big = tmp_path / "big.png"
    Image.fromarray(np.zeros((5, 4, 3), np.uint8)).save(big)
    assert main(["render", "--explanation", str(expl), "--params", "2,0,1,1",
                 "--images", f"{big},{png}", "--out", str(tmp_path / "o.svg")]) == 1


def test_invariance(tmp_path, capsys):
    net = write(tmp_path / "id.json", save_model(NetworkGraph([Dense(np.eye(2))], (2,))))
    a, b = np.array([2.0, 0.0]), np.array([0.0, 2.0])
    local = write(tmp_path / "l.json", save_pairs([(a, a), (b, b)]))
    overall = write(tmp_path / "g.json", save_pairs([(a, a), (a, b), (b, a), (b, b)]))
    assert main(["invariance", "--model", net, "--local", local, "--global", overall]) == 0
    assert capsys.readouterr().out.strip() == "2"


def one_line_error(capsys, command):
    err = capsys.readouterr().err.strip()
    assert err.startswith(f"simlrp {command}: error:")
    assert "\n" not in err
    assert "Traceback" not in err


def test_missing_file(tmp_path, capsys):
    assert main(["toy-eval", "--model", str(tmp_path / "nope.json"), "--out",
                 str(tmp_path / "r.json")]) == 1
    one_line_error(capsys, "toy-eval")


@pytest.mark.parametrize("payload", [b"", b"{", b"[]", b'{"format_version": 1}',
                                     b'{"format_version": 1, "layers": "x"}'])
def test_malformed_model(tmp_path, capsys, payload):
    model = write(tmp_path / "m.json", payload)
    x = write(tmp_path / "x.json", save_tensor(np.ones(2)))
    assert main(["explain", "--model", model, "--method", "hp", "--x", x, "--xprime", x,
                 "--out", str(tmp_path / "e.json")]) == 1
    one_line_error(capsys, "explain")


def test_input_shape_mismatch(toy_model, tmp_path, capsys):
    x = write(tmp_path / "x.json", save_tensor(np.ones(7)))
    assert main(["explain", "--model", str(toy_model), "--method", "bilrp", "--x", x,
                 "--xprime", x, "--out", str(tmp_path / "e.json")]) == 1
    one_line_error(capsys, "explain")


def test_bad_schedule_and_bounds(toy_model, tmp_path, capsys):
    x = write(tmp_path / "x.json", save_tensor(np.full(60, 2.0)))
    base = ["explain", "--model", str(toy_model), "--method", "bilrp", "--x", x, "--xprime", x,
            "--out", str(tmp_path / "e.json")]
    assert main(base + ["--gamma-schedule", "zz"]) == 1
    one_line_error(capsys, "explain")
    # inputs of 2 lie outside the [0, 1] box
    assert main(base + ["--zb", "0,1"]) == 1
    one_line_error(capsys, "explain")
    assert main(base + ["--zb", "0,1,2"]) == 1
    one_line_error(capsys, "explain")


def test_bad_render_params(tmp_path, capsys):
    net = small_image_net(tmp_path)
    x = write(tmp_path / "x.json", save_tensor(np.ones((3, 4, 4))))
    expl = tmp_path / "e.json"
    main(["explain", "--model", net, "--method", "saliency", "--x", x, "--xprime", x,
          "--out", str(expl)])
    capsys.readouterr()
    assert main(["render", "--explanation", str(expl), "--params", "2,1,0.5,1",
                 "--images", f"{x},{x}", "--out", str(tmp_path / "o.svg")]) == 1
    one_line_error(capsys, "render")
    assert main(["render", "--explanation", str(expl), "--params", "2,0,1,1",
                 "--images", x, "--out", str(tmp_path / "o.svg")]) == 1
    one_line_error(capsys, "render")
    junk = write(tmp_path / "junk.bin", b"\x00\x01")
    assert main(["render", "--explanation", str(expl), "--params", "2,0,1,1",
                 "--images", f"{junk},{x}", "--out", str(tmp_path / "o.svg")]) == 1
    one_line_error(capsys, "render")


def test_invariance_zero_mean(tmp_path, capsys):
    net = write(tmp_path / "id.json", save_model(NetworkGraph([Dense(np.eye(2))], (2,))))
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    pairs = write(tmp_path / "p.json", save_pairs([(a, b)]))
    assert main(["invariance", "--model", net, "--local", pairs, "--global", pairs]) == 1
    one_line_error(capsys, "invariance")


def test_training_divergence_reported(tmp_path, capsys):
    assert main(["toy-train", "--iterations", "200", "--lr", "1e6", "--momentum", "0",
                 "--out", str(tmp_path / "m.json")]) == 1
    one_line_error(capsys, "toy-train")


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err
