import json

import pytest
from hypothesis import given, settings, strategies as st

from metaspin import config as C
from metaspin.errors import ParameterError

BASE = {"subcommand": "crossover", "params": {"p": 0.5, "beta": 3.0, "h": 0.05, "ns": [40, 48]},
        "seeds": {"base": 7, "replicas": 10, "graphs": [0, 1]}}


def test_defaults_are_filled_in():
    cfg = C.from_dict(BASE)
    assert cfg.caps.step_cap == 10**9 and cfg.eps == 0.01 and cfg.mode == "short"
    assert cfg.params.sizes == (40, 48) and cfg.seeds.graphs == (0, 1)
    assert cfg.model_params(40).n == 40


def test_round_trip_exact():
    cfg = C.from_dict(BASE)
    assert C.parse(C.serialize(cfg)) == cfg
    assert C.serialize(C.parse(C.serialize(cfg))) == C.serialize(cfg)


@settings(max_examples=50, deadline=None)
@given(p=st.floats(0.01, 1.0), beta=st.floats(0.01, 10), h=st.floats(0, 2), n=st.integers(2, 10**4),
       base=st.integers(0, 2**40), eps=st.floats(1e-6, 1), mode=st.sampled_from(["short", "long"]))
def test_round_trip_property(p, beta, h, n, base, eps, mode):
    cfg = C.from_dict({"subcommand": "couple", "params": {"p": p, "beta": beta, "h": h, "n": n},
                       "seeds": {"base": base}, "eps": eps, "mode": mode})
    assert C.parse(C.serialize(cfg)) == cfg


@pytest.mark.parametrize("mutate", [
    lambda d: d["params"].pop("beta"),
    lambda d: d["params"].update(n=50),
    lambda d: d["params"].pop("ns"),
    lambda d: d["params"].update(p=1.5),
    lambda d: d["params"].update(h=-0.1),
    lambda d: d.update(subcommand="plot"),
    lambda d: d.update(extra=1),
    lambda d: d["seeds"].update(replicas=0),
])
def test_invalid_configs(mutate):
    d = json.loads(json.dumps(BASE))
    mutate(d)
    with pytest.raises(ParameterError):
        C.from_dict(d)


def test_invalid_json():
    with pytest.raises(ParameterError):
        C.parse("{not json")


def test_hash_changes_iff_config_changes():
    cfg = C.from_dict(BASE)
    h0 = C.content_hash(cfg)
    assert C.content_hash(C.from_dict(json.loads(json.dumps(BASE)))) == h0
    assert len(h0) == 40
    seen = {h0}
    for path, value in [(("params", "h"), 0.051), (("seeds", "base"), 8), (("seeds", "replicas"), 11),
                        (("params", "ns"), [40, 56])]:
        d = json.loads(json.dumps(BASE))
        d[path[0]][path[1]] = value
        h = C.content_hash(C.from_dict(d))
        assert h not in seen
        seen.add(h)
    d = json.loads(json.dumps(BASE))
    d["eps"] = 0.02
    assert C.content_hash(C.from_dict(d)) not in seen


def test_hash_is_git_blob_style():
    import hashlib

    cfg = C.from_dict(BASE)
    body = C.serialize(cfg).encode()
    assert C.content_hash(cfg) == hashlib.sha1(b"blob " + str(len(body)).encode() + b"\0" + body).hexdigest()
