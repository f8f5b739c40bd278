import numpy as np
import pytest

from cfkd.errors import ConfigurationError, InputError
from cfkd.validation import (
    as_image_batch,
    check_choice,
    check_fraction,
    check_labels,
    check_non_negative,
    check_positive,
    check_unit_range,
)


def test_as_image_batch_single_and_batch():
    img = np.zeros((4, 4, 3))
    batch, single = as_image_batch(img, (4, 4, 3))
    assert batch.shape == (1, 4, 4, 3) and single
    batch, single = as_image_batch(np.zeros((2, 4, 4, 3)), (4, 4, 3))
    assert batch.shape == (2, 4, 4, 3) and not single


def test_as_image_batch_errors_name_the_field():
    with pytest.raises(InputError, match="pixels"):
        as_image_batch(np.zeros((3, 3, 3)), (4, 4, 3), name="pixels")
    with pytest.raises(InputError, match=r"\(n, H, W, C\)"):
        as_image_batch(np.zeros((4, 4)), (4, 4, 3))
    bad = np.zeros((1, 4, 4, 3))
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(InputError, match="non-finite"):
        as_image_batch(bad, (4, 4, 3))


def test_check_labels():
    out = check_labels([0, 1, 1], n=3, num_classes=2)
    assert out.dtype == np.int64
    assert check_labels(np.array([0.0, 1.0]), num_classes=2).tolist() == [0, 1]
    with pytest.raises(InputError):
        check_labels([0.5, 1.0])
    with pytest.raises(InputError):
        check_labels([0, 1], n=3)
    with pytest.raises(InputError):
        check_labels([0, 2], num_classes=2)
    with pytest.raises(InputError):
        check_labels([[0, 1]])


def test_check_unit_range():
    check_unit_range(np.array([0.0, 0.5, 1.0]))
    with pytest.raises(InputError):
        check_unit_range(np.array([1.0001]))
    with pytest.raises(InputError):
        check_unit_range(np.array([-0.1]))


def test_check_fraction_bounds():
    assert check_fraction(0.0, "f") == 0.0
    assert check_fraction(1.0, "f") == 1.0
    with pytest.raises(ConfigurationError, match="f:"):
        check_fraction(1.2, "f")
    with pytest.raises(ConfigurationError):
        check_fraction(0.0, "f", inclusive=False)


def test_check_positive_and_non_negative():
    assert check_positive(3, "n", integer=True) == 3
    assert check_positive(0.25, "lr") == 0.25
    with pytest.raises(ConfigurationError):
        check_positive(0, "n", integer=True)
    with pytest.raises(ConfigurationError):
        check_positive(2.5, "n", integer=True)
    with pytest.raises(ConfigurationError):
        check_positive(float("nan"), "lr")
    assert check_non_negative(0, "k", integer=True) == 0
    with pytest.raises(ConfigurationError):
        check_non_negative(-1, "k", integer=True)


def test_check_choice():
    assert check_choice("a", ("a", "b"), "mode") == "a"
    with pytest.raises(ConfigurationError, match="mode"):
        check_choice("c", ("a", "b"), "mode")
