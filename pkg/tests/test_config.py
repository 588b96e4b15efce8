import pytest

from gazepipe import config as kv
from gazepipe.errors import ConfigError


def test_parse_with_comments():
    text = "# header\nexperiment = head_free   # trailing\n\n repetitions=5\n"
    assert kv.parse_kv(text) == {"experiment": "head_free", "repetitions": "5"}


def test_duplicate_key_names_line():
    with pytest.raises(ConfigError, match="plan.cfg:3: duplicate key 'a'"):
        kv.parse_kv("a = 1\nb = 2\na = 3\n", "plan.cfg")


@pytest.mark.parametrize("line", ["novalue", " = 3"])
def test_malformed(line):
    with pytest.raises(ConfigError, match=":1:"):
        kv.parse_kv(line)


def test_value_conversions():
    assert kv.as_bool("x", "Yes") is True and kv.as_bool("x", "off") is False
    assert kv.as_int("x", "0x10") == 16
    assert kv.as_float("x", "2.5e-1") == 0.25
    assert kv.as_list("HEOG, NEMG ,,IMU") == ("HEOG", "NEMG", "IMU")
    for fn in (kv.as_bool, kv.as_int, kv.as_float):
        with pytest.raises(ConfigError, match="x"):
            fn("x", "maybe")


def test_unknown_keys():
    kv.check_keys({"a": "1"}, ("a", "b"))
    with pytest.raises(ConfigError, match="unknown keys c, d"):
        kv.check_keys({"d": "1", "c": "2"}, ("a",))


def test_read_file(tmp_path):
    p = tmp_path / "g.cfg"
    p.write_text("n_subjects = 2\n")
    assert kv.read_kv(p) == {"n_subjects": "2"}
