from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from huberfl.config import (
    REQUIRED,
    ConfigFileNotFound,
    ConfigSyntaxError,
    ExperimentConfig,
    InvalidValueError,
    MissingKeyError,
    UnknownKeyError,
    config_to_text,
    config_with_override,
    parse_config,
    parse_config_text,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """\
task = regression
seed = 1
m = 10
rounds = 5
eta = 0.1
aggregator = mean
attack = none
eps = 0.0
output = out.csv
"""


def with_line(line, base=MINIMAL):
    return base + line + "\n"


class TestGoldenMessages:
    def test_missing_file(self, tmp_path):
        p = tmp_path / "nope.cfg"
        with pytest.raises(ConfigFileNotFound) as exc:
            parse_config(p)
        assert str(exc.value) == f"config file not found: {p}"

    def test_empty_file_lists_every_required_key(self, tmp_path):
        p = tmp_path / "empty.cfg"
        p.write_text("")
        with pytest.raises(MissingKeyError) as exc:
            parse_config(p)
        assert str(exc.value) == (
            f"{p}: missing required key(s): task, seed, m, rounds, eta, aggregator, attack, eps, output"
        )
        assert list(REQUIRED) == ["task", "seed", "m", "rounds", "eta", "aggregator", "attack", "eps", "output"]

    def test_eps_too_large(self):
        text = MINIMAL.replace("eps = 0.0", "eps = 0.6")
        with pytest.raises(InvalidValueError) as exc:
            parse_config_text(text, "c.cfg")
        assert str(exc.value) == "c.cfg:8: invalid value for eps: '0.6' (must satisfy 0 <= eps < 0.5)"

    def test_syntax(self):
        with pytest.raises(ConfigSyntaxError) as exc:
            parse_config_text(with_line("just words"), "c.cfg")
        assert str(exc.value) == "c.cfg:10: expected key = value, got 'just words'"

    def test_unknown_key(self):
        with pytest.raises(UnknownKeyError) as exc:
            parse_config_text(with_line("treshold = 1"), "c.cfg")
        assert str(exc.value) == "c.cfg:10: unknown key 'treshold'"

    def test_duplicate_key(self):
        with pytest.raises(ConfigSyntaxError) as exc:
            parse_config_text(with_line("seed = 2"), "c.cfg")
        assert str(exc.value) == "c.cfg:10: duplicate key 'seed'"

    def test_non_numeric(self):
        with pytest.raises(InvalidValueError) as exc:
            parse_config_text(MINIMAL.replace("m = 10", "m = ten"), "c.cfg")
        assert str(exc.value) == "c.cfg:3: invalid value for m: 'ten' (expected an integer)"

    def test_bad_choice(self):
        with pytest.raises(InvalidValueError) as exc:
            parse_config_text(MINIMAL.replace("attack = none", "attack = evil"), "c.cfg")
        assert str(exc.value) == (
            "c.cfg:7: invalid value for attack: 'evil' (expected one of none, signflip, ka, tma, hlma)"
        )

    def test_huber_needs_threshold(self):
        text = MINIMAL.replace("aggregator = mean", "aggregator = huber")
        with pytest.raises(MissingKeyError) as exc:
            parse_config_text(text, "c.cfg")
        assert str(exc.value) == (
            "c.cfg: missing required key(s) for aggregator huber, attack none: threshold (or t0 and bigm)"
        )

    def test_hlma_needs_threshold(self):
        text = MINIMAL.replace("attack = none", "attack = hlma")
        with pytest.raises(MissingKeyError, match="attack hlma: threshold"):
            parse_config_text(text, "c.cfg")

    @pytest.mark.parametrize("agg,key", [("krum", "q"), ("gmm", "q"), ("cwtm", "trim")])
    def test_aggregator_params(self, agg, key):
        text = MINIMAL.replace("aggregator = mean", f"aggregator = {agg}")
        with pytest.raises(MissingKeyError, match=f": {key}$"):
            parse_config_text(text, "c.cfg")

    def test_mnist_paths(self):
        text = MINIMAL.replace("task = regression", "task = classifier") + "data = mnist\n"
        with pytest.raises(MissingKeyError, match="train_images, train_labels, test_images, test_labels"):
            parse_config_text(text, "c.cfg")


class TestParsing:
    def test_minimal(self):
        cfg = parse_config_text(MINIMAL)
        assert cfg.m == 10 and cfg.eta == 0.1 and cfg.allocation == "balanced" and cfg.d == 50

    def test_comments_and_blanks(self):
        cfg = parse_config_text("# header\n\n" + MINIMAL.replace("seed = 1", "seed = 4   # inline"))
        assert cfg.seed == 4

    def test_auto_values(self):
        text = MINIMAL.replace("aggregator = mean", "aggregator = krum") + "q = auto\n"
        assert parse_config_text(text).q == "auto"

    def test_adaptive_thresholds_accepted(self):
        text = MINIMAL.replace("aggregator = mean", "aggregator = huber") + "t0 = 0\nbigm = 2\n"
        cfg = parse_config_text(text)
        assert cfg.t0 == 0.0 and cfg.bigm == 2.0

    def test_shipped_config(self):
        cfg = parse_config(CONFIGS / "synthetic_eps02_hlma.cfg")
        assert (cfg.d, cfg.n_train, cfg.m, cfg.eta, cfg.rounds) == (50, 10000, 500, 0.02, 200)
        assert (cfg.aggregator, cfg.threshold, cfg.attack, cfg.eps) == ("huber", 1.0, "hlma", 0.2)

    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
    def test_all_shipped_configs_parse(self, name):
        parse_config(CONFIGS / name)

    def test_override(self):
        cfg = config_with_override(parse_config_text(MINIMAL), "eps", "0.3")
        assert cfg.eps == 0.3

    def test_override_revalidates(self):
        with pytest.raises(MissingKeyError):
            config_with_override(parse_config_text(MINIMAL), "aggregator", "krum")
        with pytest.raises(UnknownKeyError):
            config_with_override(parse_config_text(MINIMAL), "nope", "1")


@st.composite
def configs(draw):
    agg = draw(st.sampled_from(["mean", "huber", "gm", "krum", "gmm", "cwm", "cwtm"]))
    attack = draw(st.sampled_from(["none", "signflip", "ka", "tma", "hlma"]))
    kw = {}
    if agg == "huber" or attack == "hlma":
        if draw(st.booleans()):
            kw["threshold"] = draw(st.floats(0.01, 100))
        else:
            kw["t0"] = draw(st.floats(0, 10))
            kw["bigm"] = draw(st.floats(0, 10))
    if agg in ("krum", "gmm"):
        kw["q"] = draw(st.one_of(st.just("auto"), st.integers(0, 20)))
    if agg == "cwtm":
        kw["trim"] = draw(st.one_of(st.just("auto"), st.floats(0, 0.49)))
    return ExperimentConfig(
        task=draw(st.sampled_from(["regression", "classifier"])),
        seed=draw(st.integers(0, 2**31)),
        m=draw(st.integers(1, 1000)),
        rounds=draw(st.integers(0, 500)),
        eta=draw(st.floats(1e-6, 10)),
        aggregator=agg,
        attack=attack,
        eps=draw(st.floats(0, 0.49)),
        output=draw(st.sampled_from(["a.csv", "results/run 1.csv"])),
        allocation=draw(st.sampled_from(["balanced", "stick"])),
        sigma_param=draw(st.floats(0, 1)),
        timing=draw(st.booleans()),
        **kw,
    )


@given(configs())
@settings(max_examples=200, deadline=None)
def test_round_trip(cfg):
    assert parse_config_text(config_to_text(cfg)) == cfg
