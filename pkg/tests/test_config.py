"""Strict INI loading: schema enforcement, template round trip, overrides."""

import pytest

from sdcodec.cascade import StageSchedule, default_cascade_config
from sdcodec.config import config_template, load_run_config
from sdcodec.errors import InvalidConfig
from sdcodec.metrics import BandSpec


def _write(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return path


def _dirs(tmp_path):
    train = tmp_path / "train"
    out = tmp_path / "out"
    train.mkdir()
    return train, out


MINIMAL = """\
[data]
train_dir = {train}

[training]
out_dir = {out}
"""


def test_template_round_trip(tmp_path):
    train, out = _dirs(tmp_path)
    path = _write(tmp_path, config_template(str(train), str(out)))
    rc = load_run_config(path)
    assert rc.cascade == default_cascade_config()
    assert rc.train_dir == train
    assert rc.out_dir == out
    assert rc.seed == 0
    assert rc.batch_size == 2
    assert rc.crop_seconds == 0.5
    assert rc.bands == (BandSpec(0.0, 8000.0), BandSpec(8000.0, 16000.0))
    assert rc.eval_dir is None


def test_minimal_config_uses_defaults(tmp_path):
    train, out = _dirs(tmp_path)
    rc = load_run_config(_write(tmp_path, MINIMAL.format(train=train, out=out)))
    assert rc.cascade == default_cascade_config()
    assert rc.cascade.schedule == StageSchedule(2000, 2000, 1000)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(InvalidConfig):
        load_run_config(tmp_path / "nope.ini")


def test_unknown_section_rejected(tmp_path):
    train, out = _dirs(tmp_path)
    text = MINIMAL.format(train=train, out=out) + "\n[extra]\nkey = 1\n"
    with pytest.raises(InvalidConfig):
        load_run_config(_write(tmp_path, text))


def test_unknown_key_rejected(tmp_path):
    train, out = _dirs(tmp_path)
    text = MINIMAL.format(train=train, out=out) + "\n[kernel]\nwidth = 3\n"
    with pytest.raises(InvalidConfig):
        load_run_config(_write(tmp_path, text))


def test_bad_value_rejected(tmp_path):
    train, out = _dirs(tmp_path)
    text = MINIMAL.format(train=train, out=out) + "\n[branch_low]\nstrides = a,b\n"
    with pytest.raises(InvalidConfig):
        load_run_config(_write(tmp_path, text))


def test_missing_train_dir_key(tmp_path):
    _, out = _dirs(tmp_path)
    with pytest.raises(InvalidConfig):
        load_run_config(_write(tmp_path, f"[training]\nout_dir = {out}\n"))


def test_missing_out_dir_key(tmp_path):
    train, _ = _dirs(tmp_path)
    with pytest.raises(InvalidConfig):
        load_run_config(_write(tmp_path, f"[data]\ntrain_dir = {train}\n"))


def test_nonexistent_train_dir(tmp_path):
    with pytest.raises(InvalidConfig):
        load_run_config(_write(tmp_path, MINIMAL.format(
            train=tmp_path / "missing", out=tmp_path / "out")))


def test_nonexistent_eval_dir(tmp_path):
    train, out = _dirs(tmp_path)
    text = (f"[data]\ntrain_dir = {train}\neval_dir = {tmp_path / 'missing'}\n"
            f"\n[training]\nout_dir = {out}\n")
    with pytest.raises(InvalidConfig):
        load_run_config(_write(tmp_path, text))


def test_eval_dir_accepted(tmp_path):
    train, out = _dirs(tmp_path)
    ev = tmp_path / "eval"
    ev.mkdir()
    text = (f"[data]\ntrain_dir = {train}\neval_dir = {ev}\n"
            f"\n[training]\nout_dir = {out}\n")
    assert load_run_config(_write(tmp_path, text)).eval_dir == ev


def test_overrides_feed_through(tmp_path):
    train, out = _dirs(tmp_path)
    text = MINIMAL.format(train=train, out=out) + """
[weights_low]
mel = 7.5

[kernel]
zero_crossings = 4

[metrics]
bands = 0:4000,4000:16000
"""
    rc = load_run_config(_write(tmp_path, text))
    assert rc.cascade.loss_weights[0].mel == 7.5
    assert rc.cascade.loss_weights[1].mel == 15.0
    assert rc.cascade.kernel.zero_crossings_per_side == 4
    assert rc.bands == (BandSpec(0.0, 4000.0), BandSpec(4000.0, 16000.0))


def test_schedule_and_seed_overrides(tmp_path):
    train, out = _dirs(tmp_path)
    text = (f"[data]\ntrain_dir = {train}\n\n[training]\nout_dir = {out}\n"
            "seed = 9\nbatch_size = 3\nstage1_steps = 10\n"
            "stage2_steps = 20\nfinetune_steps = 5\n")
    rc = load_run_config(_write(tmp_path, text))
    assert rc.seed == 9
    assert rc.batch_size == 3
    assert rc.cascade.schedule == StageSchedule(10, 20, 5)


def test_bad_band_spec_rejected(tmp_path):
    train, out = _dirs(tmp_path)
    text = MINIMAL.format(train=train, out=out) + "\n[metrics]\nbands = junk\n"
    with pytest.raises(InvalidConfig):
        load_run_config(_write(tmp_path, text))


def test_inline_comments_allowed(tmp_path):
    train, out = _dirs(tmp_path)
    text = (f"[data]\ntrain_dir = {train}\n\n[training]\nout_dir = {out}\n"
            "seed = 3  # deterministic rerun\n")
    assert load_run_config(_write(tmp_path, text)).seed == 3
