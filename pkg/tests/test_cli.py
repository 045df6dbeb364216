import json

import pytest

from mbdiag.cli import RunConfig, build_parser, config_from_args, main, run, sig15, sweep_models
from mbdiag.diagram_ir import canonical_key
from mbdiag.errors import MbdiagError
from mbdiag.golden import fixture_diagram
from mbdiag.model_core import model_to_dict, random_model


@pytest.fixture
def small_model_path(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(model_to_dict(random_model(3, 1, 2, 1, 1))))
    return str(path)


def test_sig15():
    assert sig15(1 / 3) == 0.333333333333333
    assert sig15({"a": [2 / 3, True, 1]}) == {"a": [0.666666666666667, True, 1]}


def test_run_config_validation():
    with pytest.raises(MbdiagError):
        RunConfig("enumerate", model_path="m.json", order=4)
    with pytest.raises(MbdiagError):
        RunConfig("enumerate", model_path="m.json", target="oeff", order=3)
    with pytest.raises(MbdiagError):
        RunConfig("verify", model_path="m.json", order=1, tolerance=0.0)
    with pytest.raises(MbdiagError):
        RunConfig("eval", order=1)
    with pytest.raises(MbdiagError):
        RunConfig("render")
    with pytest.raises(MbdiagError):
        RunConfig("plot")
    assert RunConfig("enumerate", model_path="m.json", target="oeff", order=0).order == 0


def test_parser_builds_config():
    args = build_parser().parse_args(["verify", "--model", "m.json", "--order", "2", "--seed-sweep", "3"])
    config = config_from_args(args)
    assert config.command == "verify"
    assert config.model_path == "m.json"
    assert config.order == 2
    assert config.seed_sweep == 3


def test_enumerate_prints_count_and_keys(sample_model_path, sample_model, capsys):
    from mbdiag.diagram_gen import enumerate_heff

    assert main(["enumerate", "--target", "heff", "--order", "2", "--model", sample_model_path]) == 0
    out = capsys.readouterr().out.splitlines()
    expected = enumerate_heff(2, sample_model)
    assert out[0] == f"{len(expected)} heff diagrams of order 2"
    assert out[1:] == [canonical_key(d) for d in expected]


def test_enumerate_is_byte_identical(sample_model_path, tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for path in (a, b):
        assert main(["enumerate", "--order", "2", "--model", sample_model_path, "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_enumerate_with_dot_render(sample_model_path, capsys):
    assert main(["enumerate", "--order", "1", "--model", sample_model_path, "--render", "dot"]) == 0
    assert "digraph diagram {" in capsys.readouterr().out


def test_eval_writes_tensor_file(small_model_path, tmp_path):
    out = tmp_path / "tensor.json"
    assert main(["eval", "--order", "2", "--model", small_model_path, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["schema_version"] == 1
    assert report["order"] == 2
    ranks = [t["rank"] for t in report["tensors"]]
    assert ranks == sorted(ranks)
    for t in report["tensors"]:
        assert t["antisymmetrized"] is True


def test_group(small_model_path, capsys):
    assert main(["group", "--order", "2", "--model", small_model_path]) == 0
    out = capsys.readouterr().out
    assert "skeleton groups" in out
    assert "members" in out


def test_verify_first_order(sample_model_path, tmp_path):
    out = tmp_path / "report.json"
    assert main(["verify", "--order", "1", "--model", sample_model_path, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["schema_version"] == 1
    assert report["orders"]["1"]["pass"]
    assert report["orders"]["1"]["max_rel_error"] < 1e-12
    assert report["seeds"] == []
    assert report["pass"]


def test_verify_seed_sweep(small_model_path, tmp_path):
    out = tmp_path / "report.json"
    argv = ["verify", "--order", "2", "--model", small_model_path, "--seed", "10", "--seed-sweep", "2"]
    assert main(argv + ["--out", str(out), "--workers", "2"]) == 0
    report = json.loads(out.read_text())
    assert report["seeds"] == [10, 11]
    assert set(report["orders"]) == {"1", "2"}
    assert report["pass"]


def test_verify_failure_exit_code(small_model_path, monkeypatch):
    import mbdiag.cli as cli

    monkeypatch.setattr(cli, "verify_model", lambda m, order, workers=None: [1.0] * order)
    config = RunConfig("verify", model_path=small_model_path, order=1)
    assert run(config) == 1


def test_sweep_models_keep_shape(sample_model):
    models = sweep_models(sample_model, 5, 2)
    assert len(models) == 3
    for m in models[1:]:
        assert len(m.core) == len(sample_model.core)
        assert len(m.valence) == len(sample_model.valence)
        assert m.valence_electrons == sample_model.valence_electrons
        assert m.v_ranks == sample_model.v_ranks


def test_missing_model_file(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["enumerate", "--order", "1", "--model", missing]) == 2
    assert "error" in capsys.readouterr().err


def test_invalid_model_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"orbitals": []}')
    assert main(["eval", "--order", "1", "--model", str(path)]) == 2
    assert "missing" in capsys.readouterr().err


def test_order_out_of_range(sample_model_path):
    assert main(["eval", "--target", "oeff", "--order", "3", "--model", sample_model_path]) == 2


def test_render_diagram_file(tmp_path, capsys):
    path = tmp_path / "family.json"
    path.write_text(fixture_diagram("factorized_family").to_json())
    assert main(["render", "--diagram", str(path)]) == 0
    out = capsys.readouterr().out
    assert "Vb" in out
    assert "[hole]" in out
    assert main(["render", "--diagram", str(path), "--render", "dot"]) == 0
    assert "rankdir=BT" in capsys.readouterr().out


def test_render_missing_diagram(tmp_path):
    assert main(["render", "--diagram", str(tmp_path / "none.json")]) == 2


@pytest.mark.slow
def test_golden_command(capsys):
    assert main(["golden"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["pass"]


def _write_model(tmp_path, mutate):
    doc = model_to_dict(random_model(3, 1, 2, 1, 1))
    mutate(doc)
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda doc: doc["V"][0]["entries"][0].pop("bra"), "'bra'"),
        (lambda doc: doc.update(valence_electrons="two"), "'valence_electrons'"),
        (lambda doc: doc.update(V=5), "'V'"),
        (lambda doc: doc["orbitals"][0].pop("id"), "'id'"),
        (lambda doc: doc["orbitals"][1].update(space="frozen"), "'space'"),
        (lambda doc: doc["O"].update(rank="one"), "'rank'"),
        (lambda doc: doc["O"].update(rank=40), "rank 40"),
        (lambda doc: doc["O"]["entries"][0].update(ket=3), "'ket'"),
        (lambda doc: doc["O"]["entries"][0].update(ket=[-1]), "'ket'"),
        (lambda doc: doc["O"].update(entries={"bra": [0]}), "'entries'"),
        (lambda doc: doc.update(O=[]), "O must be an object"),
    ],
)
def test_malformed_model_is_an_input_error(tmp_path, capsys, mutate, message):
    path = _write_model(tmp_path, mutate)
    assert main(["enumerate", "--order", "1", "--model", path]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert message in err


@pytest.mark.parametrize(
    "mutate",
    [
        lambda doc: doc["vertices"][0].pop("rank"),
        lambda doc: doc["vertices"][0].update(kind="X"),
        lambda doc: doc["vertices"][0].update(level="1/0"),
        lambda doc: doc["lines"][0].update({"from": 3}),
        lambda doc: doc.pop("target"),
        lambda doc: doc["lines"][0].update({"from": [9, 0]}),
    ],
)
def test_malformed_diagram_is_an_input_error(tmp_path, capsys, mutate):
    doc = fixture_diagram("factorized_family").to_dict()
    mutate(doc)
    path = tmp_path / "diagram.json"
    path.write_text(json.dumps(doc))
    assert main(["render", "--diagram", str(path)]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_every_error_is_an_input_error():
    import inspect

    import mbdiag.errors as errors

    assert errors.__doc__.strip().splitlines()[0] == "Errors Module"
    classes = [c for _, c in inspect.getmembers(errors, inspect.isclass) if c.__module__ == errors.__name__]
    assert len(classes) > 1
    for c in classes:
        assert issubclass(c, errors.MbdiagError)
        assert issubclass(c, ValueError)
