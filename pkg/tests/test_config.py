import json
import math

import pytest

from devbvp.config import ConfigError, ProblemConfig, builtin, example1, example2


def test_round_trip(tmp_path):
    cfg = example2(0.07)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = ProblemConfig.load(path)
    assert back == cfg


def test_constant_expression_fields():
    d = example1().to_dict()
    d["B"] = "pi/4"
    assert ProblemConfig.from_dict(d).B == math.pi / 4


@pytest.mark.parametrize(
    "patch,match",
    [
        ({"f": "1 +"}, "f:"),
        ({"tau": "x"}, "only use t"),
        ({"N": 3}, "N must be"),
        ({"outer_tol": 0}, "positive"),
        ({"bogus": 1}, "unknown fields"),
        ({"B": "t"}, "constant"),
        ({"singular_at_zero": {"q": True}}, "singular_at_zero"),
    ],
)
def test_validation(patch, match):
    d = example1().to_dict()
    d.update(patch)
    with pytest.raises(ConfigError, match=match):
        ProblemConfig.from_dict(d)


def test_missing_field():
    d = example1().to_dict()
    del d["tau"]
    with pytest.raises(ConfigError, match="tau"):
        ProblemConfig.from_dict(d)


def test_builtins():
    assert builtin("example2", 0.2).L1 == "0.2"
    with pytest.raises(ConfigError):
        builtin("example1", 0.2)
    with pytest.raises(ConfigError):
        builtin("nope")
    with pytest.raises(ConfigError):
        example2(-1)
