import pytest

from contraction_lab import specfile
from contraction_lab.specfile import SpecError


def test_gaussian_spec_with_comments():
    m = specfile.loads("# target\nfamily = gaussian  # 1-D\ndim = 1\nsigma = 0.5\n")
    assert m.dim == 1 and m.is_probability
    assert m.params["spec"]["sigma"] == 0.5


def test_list_values_and_sum_family():
    m = specfile.loads("family = quartic_radial\nprecision = 1, 4\n")
    assert m.potential.family == "sum"
    assert m.potential.convexity_lower_bound == pytest.approx(1.0)


@pytest.mark.parametrize("text", [
    "dim = 1\n",
    "family = gaussian\ndim = 1\ndim = 2\n",
    "family = gaussian\ncolour = red\n",
    "family = nonsense\n",
    "family = gaussian\nsigma = abc\n",
    "family = gaussian\nsigma = inf\n",
    "family = gaussian\nsigma\n",
    "family = anisotropic_gaussian\n",
    "family = gaussian\nsigma = -1\n",
])
def test_malformed(text):
    with pytest.raises(SpecError):
        specfile.loads(text)


def test_missing_file(tmp_path):
    with pytest.raises(SpecError):
        specfile.load(tmp_path / "absent.spec")


@pytest.mark.parametrize("text, kind", [
    ("family = cosine_model\nA = 2\n", "model_nu"),
    ("family = uniform\nbody = disk\nradius = 2\n", "uniform_on_body"),
    ("family = radial\npsi = exp\n", "radial"),
    ("family = exponential\nrate = 1.5\n", "density"),
])
def test_families(text, kind):
    assert specfile.loads(text).kind == kind


def test_halfline_is_infinite():
    m = specfile.loads("family = halfline\nlevel = 2\nslope = 0.5\n")
    assert m.mass == "infinite" and not m.is_probability
