import json

import numpy as np
import pytest

import run_config
from field_io import write_spfield
from grid_utils import build_domain, disk_predicate
from run_config import (
    OUTPUT_ENV, domain_from_dict, domain_to_dict, load_config, parse_config, sample_shape, validate_config,
)
from solver_io import ConfigError

DOMAIN = {"extent": [1.0, 1.0], "resolution": 32}


@pytest.fixture(autouse=True)
def no_output_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def _error_path(data, base_dir="."):
    with pytest.raises(ConfigError) as info:
        parse_config(data, base_dir)
    return info.value.path


def test_minimal_config_gets_defaults():
    config = parse_config({"domain": DOMAIN})
    assert config.domain.shape == (32, 32)
    assert config.seed == 0
    assert config.output_dir == run_config.DEFAULT_OUTPUT_DIR
    assert config.formats == run_config.FORMATS
    assert config.optimizer.mu_schedule == (1e3, 1e4, 1e5)
    assert set(config.verify["checks"]) == set(run_config.CHECKS)
    assert config.solve == {} and config.monotonicity == {} and config.objective is None


def test_verify_and_monotonicity_need_no_domain():
    config = parse_config({"verify": {"input_dir": "run", "checks": ["junction", "nodal"]}})
    assert config.domain is None
    assert config.verify["checks"] == {"junction": {}, "nodal": {}}


@pytest.mark.parametrize("data, path", [
    ({"domain": DOMAIN, "extras": {}}, "extras"),
    ({"domain": {"extent": [1.0, 1.0], "resolution": 2}}, "domain.resolution"),
    ({"domain": {"extent": [1.0], "resolution": 8}}, "domain.extent"),
    ({"domain": {"extent": [1.0, "a"], "resolution": 8}}, "domain.extent[1]"),
    ({"domain": {**DOMAIN, "mask": {"type": "hexagon"}}}, "domain.mask.type"),
    ({"domain": {**DOMAIN, "mask": {"type": "disk", "center": [0.5, 0.5], "radius": -1}}}, "domain.mask.radius"),
    ({"domain": DOMAIN, "outputs": {"formats": ["csv", "pdf"]}}, "outputs.formats[1]"),
    ({"domain": DOMAIN, "solve": {"problem": "eigen", "k": 21}}, "solve.k"),
    ({"domain": DOMAIN, "solve": {"problem": "heat"}}, "solve.problem"),
    ({"domain": DOMAIN, "objective": {"g": "sum"}}, "objective.functionals"),
    ({"domain": DOMAIN, "objective": {"functionals": ["lambda_1"], "m": -2}}, "objective.m"),
    ({"domain": DOMAIN, "optimizer": {"mu_schedule": [1e4, 1e3]}}, "optimizer.mu_schedule[1]"),
    ({"domain": DOMAIN, "optimizer": {"momentum": 0.9}}, "optimizer.momentum"),
    ({"domain": DOMAIN, "optimizer": {"backtrack": 2.0}}, "optimizer.backtrack"),
    ({"verify": {"checks": {"bogus": {}}}}, "verify.checks.bogus"),
    ({"monotonicity": {"radii": [0.1]}}, "monotonicity"),
    ({"monotonicity": {"preset": "spirals"}}, "monotonicity.preset"),
    ({"monotonicity": {"preset": "halfplanes", "radii": {"max": -1}}}, "monotonicity.radii.max"),
    ({"monotonicity": {"preset": "halfplanes", "gradients": "spectral"}}, "monotonicity.gradients"),
    ({"domain": DOMAIN, "optimizer": {"patience": 0}}, "optimizer.patience"),
])
def test_schema_errors_name_the_key(data, path):
    assert _error_path(data) == path


def test_solve_section_defaults():
    torsion = parse_config({"domain": DOMAIN, "solve": {"problem": "torsion"}}).solve
    eigen = parse_config({"domain": DOMAIN, "solve": {"problem": "eigen", "k": 3}}).solve
    assert torsion["tol"] == 1e-10 and torsion["method"] == "cg" and torsion["mode"] == "exact"
    assert eigen["tol"] == 1e-8 and eigen["k"] == 3


def test_objective_section():
    config = parse_config({"domain": DOMAIN, "objective": {
        "g": "weighted_sum", "weights": [1, 2], "m": 5,
        "functionals": ["lambda_2", {"kind": "torsion_energy"}]}})
    assert config.objective.n_phases == 2
    assert config.objective.functionals[0].k == 2
    assert config.objective.weights == (1.0, 2.0)


def test_output_directory_precedence(monkeypatch):
    data = {"domain": DOMAIN, "outputs": {"dir": "from_config"}}
    assert parse_config(data).output_dir == "from_config"
    monkeypatch.setenv(OUTPUT_ENV, "from_env")
    assert parse_config(data).output_dir == "from_env"
    assert parse_config(data, out_override="from_flag").output_dir == "from_flag"


def test_seed_flows_into_the_optimizer():
    config = parse_config({"domain": DOMAIN, "seed": 7})
    assert config.optimizer.seed == 7
    assert parse_config({"domain": DOMAIN, "seed": 7, "optimizer": {"seed": 2}}).optimizer.seed == 2


def test_initial_fields_come_from_spfield_files(tmp_path):
    domain = build_domain((1.0, 1.0), 32)
    write_spfield(tmp_path / "a.spf", domain, np.full(domain.shape, 0.4))
    write_spfield(tmp_path / "b.spf", domain, np.full(domain.shape, 0.3))
    config = parse_config({"domain": DOMAIN, "optimizer": {"init_fields": ["a.spf", "b.spf"]}}, str(tmp_path))
    assert config.optimizer.init == "given"
    assert len(config.optimizer.init_phases) == 2
    assert np.all(config.optimizer.init_phases[1] == 0.3)

    write_spfield(tmp_path / "small.spf", build_domain((1.0, 1.0), 8), np.zeros((8, 8)))
    assert _error_path({"domain": DOMAIN, "optimizer": {"init_fields": ["small.spf"]}},
                       str(tmp_path)) == "optimizer.init_fields[0]"
    assert _error_path({"domain": DOMAIN, "optimizer": {"init_fields": ["missing.spf"]}},
                       str(tmp_path)) == "optimizer.init_fields[0]"


def test_disk_mask_and_shapes():
    config = parse_config({"domain": {**DOMAIN, "mask": {"type": "disk", "center": [0.5, 0.5], "radius": 0.4}}})
    domain = config.domain
    assert domain.n_active < 32 * 32
    box = sample_shape(domain, {"type": "box", "lo": [0.0, 0.0], "hi": [0.5, 1.0]}, "solve.support")
    assert not np.any(box & ~domain.mask)
    assert np.array_equal(sample_shape(domain, None, "solve.support"), domain.mask)


def test_field_shape_reads_a_threshold(tmp_path):
    domain = build_domain((1.0, 1.0), 16)
    values = np.zeros(domain.shape)
    values[:8, :] = 0.8
    write_spfield(tmp_path / "support.spf", domain, values)
    support = sample_shape(domain, {"type": "field", "path": "support.spf"}, "solve.support", str(tmp_path))
    assert support.sum() == 128


def test_monotonicity_radii_forms():
    ranged = parse_config({"monotonicity": {"preset": "sectors", "radii": {"min": 0.05, "count": 8}}})
    assert ranged.monotonicity["radii"] == {"min": 0.05, "max": 0.4, "count": 8}
    assert ranged.monotonicity["resolution"] == 512
    assert ranged.monotonicity["gradients"] == "analytic"
    listed = parse_config({"monotonicity": {"preset": "halfplanes", "radii": [0.1, 0.2], "resolution": 64}})
    assert listed.monotonicity["radii"] == [0.1, 0.2]
    assert listed.monotonicity["center"] is None


def test_domain_description_keeps_the_mask(tmp_path):
    domain = build_domain((2.0, 1.0), 32, mask=disk_predicate((1.0, 0.5), 0.4), origin=(-1.0, 0.0))
    data = domain_to_dict(domain)
    assert data["mask_file"] == run_config.MASK_FILE
    write_spfield(tmp_path / data["mask_file"], domain, domain.mask.astype(float))

    restored = domain_from_dict(json.loads(json.dumps(data)), str(tmp_path))
    assert restored.same_grid(domain)
    assert np.array_equal(restored.mask, domain.mask)
    assert domain_to_dict(build_domain((1.0, 1.0), 8))["mask_file"] is None
    with pytest.raises(ConfigError):
        domain_from_dict({"extent": [1.0, 1.0]})


def test_load_config_reports_file_problems(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(str(tmp_path / "missing.json"))
    assert info.value.path == "<file>"

    broken = tmp_path / "broken.json"
    broken.write_text('{"domain": ')
    with pytest.raises(ConfigError) as info:
        load_config(str(broken))
    assert info.value.path == "<file>"

    good = tmp_path / "run.json"
    good.write_text(json.dumps({"domain": DOMAIN}))
    assert load_config(str(good)).base_dir == str(tmp_path)


def test_validate_config_returns_a_tuple():
    assert validate_config({"domain": DOMAIN}) == (True, "Configuration is valid.")
    ok, message = validate_config({"domain": DOMAIN, "optimizer": {"tol": 0}})
    assert not ok
    assert message.startswith("optimizer.tol: ")
