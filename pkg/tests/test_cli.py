import dataclasses
import hashlib
import json

import pytest

from couplemfg import __version__
from couplemfg.cli import main
from couplemfg.config import (
    KINDS,
    build_spec,
    flat_to_entries,
    load_config,
    parse_config_text,
    spec_to_flat,
)
from couplemfg.errors import ConfigError
from couplemfg.output import RunManifest, Table, export_csv, read_manifest, write_manifest
from couplemfg.runner import (
    coarsen_spec,
    registry_names,
    registry_specs,
    rerun_manifest,
    run_spec,
)


def test_parse_grammar():
    text = "\n".join(
        [
            "# full-line comment",
            "kind = simulate",
            "",
            "[grid]",
            "nx = 201   # trailing comment",
        ]
    )
    entries = parse_config_text(text, "t.cfg")
    assert entries == [(2, "", "kind", "simulate"), (5, "grid", "nx", "201")]

    with pytest.raises(ConfigError, match=r"t\.cfg: line 2: duplicate key 'kind'"):
        parse_config_text("kind = a\nkind = b", "t.cfg")
    with pytest.raises(ConfigError, match="line 1: expected key = value"):
        parse_config_text("just words", "t.cfg")
    with pytest.raises(ConfigError, match="line 1: unterminated section header"):
        parse_config_text("[grid", "t.cfg")
    with pytest.raises(ConfigError, match="line 1: empty section name"):
        parse_config_text("[  ]", "t.cfg")
    with pytest.raises(ConfigError, match="line 1: missing value for 'dt'"):
        parse_config_text("dt =", "t.cfg")
    # the same key may repeat across sections
    parse_config_text("[grid]\nx_min = 0\n[run]\nx_min = 1", "t.cfg")


def _spec(text, name="test", origin="t.cfg"):
    return build_spec(parse_config_text(text, origin), default_name=name, origin=origin)


def test_build_spec_fills_kind_defaults():
    spec = _spec("kind = steady_states")
    assert spec.name == "test"
    assert spec.seed == 0
    assert spec.run.scan_points == 4001
    assert spec.run.root_tol == 1e-10
    assert (spec.run.x_min, spec.run.x_max) == (-10.0, 10.0)
    # knobs from other kinds stay unset
    assert spec.run.dt is None and spec.run.mode is None

    with pytest.raises(ConfigError, match="missing required key 'kind'"):
        _spec("r = 2.5")
    with pytest.raises(ConfigError, match="kind must be one of steady_states, simulate"):
        _spec("kind = nonsense")
    with pytest.raises(ConfigError, match="name must be an identifier"):
        _spec("kind = steady_states\nname = 2bad")
    with pytest.raises(ConfigError, match="line 2: unknown key 'rr'"):
        _spec("kind = steady_states\nrr = 2.5")
    # the section itself produces no entry, so the first key inside it
    # is what gets flagged
    with pytest.raises(ConfigError, match=r"line 4: unknown section \[misc\]"):
        _spec("kind = steady_states\n\n[misc]\nx = 1")
    with pytest.raises(ConfigError, match="line 3: unknown key \\[run\\] 'dt' for kind 'steady_states'"):
        _spec("kind = steady_states\n[run]\ndt = 0.1")


def test_model_errors_cite_the_offending_line():
    text = "kind = simulate\nr = 2.5\ns_bar = 9\n[initial]\nstates = 0"
    with pytest.raises(ConfigError, match=r"t\.cfg: line 3: s_bar must be >= 10, got 9\.0"):
        _spec(text)


def test_section_requirements_per_kind():
    with pytest.raises(ConfigError, match=r"kind 'hjb' requires a \[grid\] section"):
        _spec("kind = hjb")
    with pytest.raises(ConfigError, match=r"kind 'simulate' requires \[initial\] states"):
        _spec("kind = simulate")
    grid = "[grid]\nx_min = -2\nx_max = 14\nnx = 81\nnt = 126"
    with pytest.raises(ConfigError, match=r"kind 'fpk' requires \[initial\] density"):
        _spec(f"kind = fpk\n{grid}")
    with pytest.raises(ConfigError, match=r"\[grid\] is missing key 'nt'"):
        _spec("kind = hjb\n[grid]\nx_min = -2\nx_max = 14\nnx = 81")
    with pytest.raises(ConfigError, match="either states or density, not both"):
        _spec(
            "kind = simulate\n[initial]\nstates = 0\ndensity = gaussian(0, 1)"
        )
    with pytest.raises(ConfigError, match=r"pmp mode 'stochastic' requires \[initial\] states"):
        _spec(f"kind = pmp\n{grid}\n[run]\nmode = stochastic")
    with pytest.raises(ConfigError, match="pmp mode must be one of"):
        _spec("kind = pmp\n[run]\nmode = sideways")
    with pytest.raises(ConfigError, match="mfg mode must be one of"):
        _spec(f"kind = mfg\n{grid}\n[run]\nmode = sideways")


def test_density_and_effort_values():
    base = "kind = fpk\nT = 5\n[grid]\nx_min = -2\nx_max = 14\nnx = 81\nnt = 126\n[initial]\n"
    spec = _spec(base + "density = gaussian(6, 1.5)")
    assert spec.initial_density == ((1.0, 6.0, 1.5),)
    assert spec.grid.t_final == 5.0

    spec = _spec(base + "density = mixture((0.5, -5, 0.05), (0.5, 5, 0.05))")
    assert spec.initial_density == ((0.5, -5.0, 0.05), (0.5, 5.0, 0.05))

    with pytest.raises(ConfigError, match="density must be gaussian"):
        _spec(base + "density = uniform(0, 1)")
    with pytest.raises(ConfigError, match="cannot parse density arguments"):
        _spec(base + "density = gaussian(6; 1.5)")
    with pytest.raises(ConfigError, match=r"gaussian takes \(center, std\), got 3 values"):
        _spec(base + "density = gaussian(6, 1.5, 2)")
    with pytest.raises(ConfigError, match="mixture weight must be > 0"):
        _spec(base + "density = mixture((0, 1, 1))")
    with pytest.raises(ConfigError, match="density std must be > 0"):
        _spec(base + "density = gaussian(6, 0)")

    spec = _spec(base + "density = gaussian(6, 1.5)\n[run]\neffort = zero")
    assert spec.run.effort == 0.0
    with pytest.raises(ConfigError, match="effort must be >= 0"):
        _spec(base + "density = gaussian(6, 1.5)\n[run]\neffort = -1")


def test_flat_form_round_trips():
    specs = registry_specs()
    for name in ("mfg_fixed_point", "fig15", "fig8", "contagion_check"):
        spec = specs[name]
        flat = spec_to_flat(spec)
        rebuilt = build_spec(flat_to_entries(flat), default_name=spec.name, origin="flat")
        assert rebuilt == spec, name


def test_registry_contents():
    names = registry_names()
    expected = tuple(f"fig{n}" for n in range(3, 23)) + (
        "mfg_fixed_point",
        "contagion_check",
    )
    assert names == expected
    specs = registry_specs()
    assert specs["fig3"].kind == "steady_states"
    assert specs["fig17"].run.mode == "stochastic"
    assert specs["fig22"].run.mode == "constant_effort"
    assert specs["mfg_fixed_point"].run.mode == "fixed_point"
    assert all(spec.kind in KINDS for spec in specs.values())


def test_csv_export(tmp_path):
    table = Table(
        header=("name", "count", "value", "flag"),
        rows=(("alpha", 3, 1.0 / 3.0, True), ("beta", -1, 0.1, False)),
    )
    path = tmp_path / "t.csv"
    digest = export_csv(table, path)
    data = path.read_bytes()
    assert digest == hashlib.sha256(data).hexdigest()
    text = data.decode("utf-8")
    assert text.endswith("\n")
    lines = text.splitlines()
    assert lines[0] == "name,count,value,flag"
    assert lines[1] == "alpha,3," + repr(1.0 / 3.0) + ",true"
    assert lines[2] == "beta,-1,0.1,false"
    # repr floats survive the round trip exactly
    assert float(lines[1].split(",")[2]) == 1.0 / 3.0

    with pytest.raises(ValueError, match="row 0 has 1 cells, header has 2"):
        Table(header=("a", "b"), rows=((1,),))
    with pytest.raises(ValueError, match="may not contain commas or newlines"):
        export_csv(Table(header=("a",), rows=(("x,y",),)), tmp_path / "bad.csv")
    with pytest.raises(ValueError, match="cannot format cell of type complex"):
        export_csv(Table(header=("a",), rows=((1j,),)), tmp_path / "bad.csv")


def test_manifest_round_trip(tmp_path):
    manifest = RunManifest(
        name="t",
        kind="simulate",
        version=__version__,
        seed=7,
        config={"kind": "simulate"},
        outputs={"paths.csv": "00ff"},
        wall_clock_s=0.25,
    )
    path = tmp_path / "manifest.json"
    write_manifest(manifest, path)
    assert read_manifest(path) == manifest

    with pytest.raises(ConfigError, match="manifest not found"):
        read_manifest(tmp_path / "absent.json")
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="cannot read manifest"):
        read_manifest(tmp_path / "broken.json")
    payload = json.loads(path.read_text())
    del payload["seed"], payload["outputs"]
    (tmp_path / "partial.json").write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ConfigError, match=r"missing fields: \['outputs', 'seed'\]"):
        read_manifest(tmp_path / "partial.json")


def test_run_spec_writes_verifiable_outputs(tmp_path):
    spec = registry_specs()["fig3"]
    man = run_spec(spec, tmp_path / "a")
    assert man.version == __version__
    assert set(man.outputs) == {"roots.csv"}
    for filename, digest in man.outputs.items():
        data = (tmp_path / "a" / filename).read_bytes()
        assert hashlib.sha256(data).hexdigest() == digest
    on_disk = read_manifest(tmp_path / "a" / "manifest.json")
    assert on_disk.config == man.config and on_disk.outputs == man.outputs

    # a manifest alone reproduces the run byte for byte
    again = rerun_manifest(man, tmp_path / "b")
    assert again.outputs == man.outputs

    stale = dataclasses.replace(man, version="9.9.9")
    with pytest.raises(ConfigError, match="produced by version 9.9.9"):
        rerun_manifest(stale, tmp_path / "c")


def test_coarsen_spec_shrinks_resolution():
    specs = registry_specs()
    c20 = coarsen_spec(specs["fig20"])
    assert (c20.grid.nx, c20.grid.nt) == (81, 126)
    assert c20.run.snapshots == 5
    c5 = coarsen_spec(specs["fig5"])
    assert c5.run.dt == pytest.approx(0.04)
    c3 = coarsen_spec(specs["fig3"])
    assert c3.run.scan_points == 1001
    c15 = coarsen_spec(specs["fig15"])
    assert c15.run.n_points == 7
    # coarsening never invalidates the spec
    assert c20.params == specs["fig20"].params


def test_cli_success_and_kind_check(tmp_path, capsys):
    cfg = tmp_path / "roots.cfg"
    cfg.write_text("kind = steady_states\nr = 2.5\n", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["steady-states", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "roots.csv").is_file() and (out / "manifest.json").is_file()
    stdout = capsys.readouterr().out
    assert f"wrote {out}/roots.csv" in stdout
    assert f"wrote {out}/manifest.json" in stdout

    # the config's kind must match the subcommand that loads it
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "config error:" in err
    assert "does not match subcommand 'simulate'" in err


def test_cli_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("kind = steady_states\ns_bar = 9\n", encoding="utf-8")
    assert main(["steady-states", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "config error:" in capsys.readouterr().err

    assert main(["steady-states", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert "config file not found" in capsys.readouterr().err

    # explicit Euler far beyond its stability limit diverges cleanly
    blow = tmp_path / "blow.cfg"
    blow.write_text(
        "kind = simulate\nr = 5\nT = 54\n[initial]\nstates = 1\n[run]\ndt = 0.9\n",
        encoding="utf-8",
    )
    assert main(["simulate", "--config", str(blow), "--out", str(tmp_path / "b")]) == 3
    err = capsys.readouterr().err
    assert "numerical failure:" in err and "diverged" in err

    assert main(["figure", "no_such_entry", "--out", str(tmp_path / "f")]) == 2
    assert "unknown figure id" in capsys.readouterr().err


def test_cli_figure_and_listing(tmp_path, capsys):
    out = tmp_path / "fig3"
    assert main(["figure", "3", "--fast", "--out", str(out)]) == 0
    assert (out / "roots.csv").is_file()
    capsys.readouterr()

    assert main(["list-figures"]) == 0
    listed = capsys.readouterr().out
    for name in registry_names():
        assert name in listed


def test_cli_seed_override_controls_noise(tmp_path, capsys):
    def run(seed, sub):
        out = tmp_path / f"{sub}_{seed}"
        code = main(["figure", "8", "--fast", "--seed", str(seed), "--out", str(out)])
        assert code == 0
        return (out / "paths.csv").read_bytes()

    a1 = run(1, "a")
    b1 = run(1, "b")
    a2 = run(2, "c")
    assert a1 == b1
    assert a1 != a2
