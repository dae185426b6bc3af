import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from composite_membrane.geometry import (
    HANDLE,
    LEFT_LOBE,
    RIGHT_LOBE,
    DegenerateGridError,
    DomainSpec,
    measure,
    rasterize,
    read_mask_file,
)


def test_unit_square_cells_sit_on_quarter_grid():
    # the outer ring of centers lies on the boundary, so 3x3 cells remain
    d = rasterize(DomainSpec.rectangle(1, 1), 0.25)
    assert d.n_cells == 9
    assert measure(d) == 9 * 0.0625
    xs = np.unique(d.centers[:, 0])
    np.testing.assert_allclose(xs, [0.25, 0.5, 0.75])
    assert d.interior.shape == (5, 5)


def test_measure_of_subset():
    d = rasterize(DomainSpec.rectangle(1, 1), 0.25)
    assert measure(d, [0, 1, 2, 3]) == 0.25
    with pytest.raises(ValueError):
        measure(d, [0, 9])


def test_disk_measure():
    d = rasterize(DomainSpec.disk(1), 1 / 64)
    assert abs(measure(d) - np.pi) < 0.05


def test_annulus_measure():
    d = rasterize(DomainSpec.annulus(5), 1 / 8)
    assert abs(measure(d) - 11 * np.pi) < 0.5


@pytest.mark.parametrize("spec", [DomainSpec.disk(1), DomainSpec.annulus(2), DomainSpec.dumbbell(0.2)])
def test_refinement_consistency(spec):
    h = 1 / 16
    perimeter = {"disk": 2 * np.pi, "annulus": 2 * np.pi * 5, "dumbbell": 4 * np.pi + 4}[spec.kind]
    a, b = measure(rasterize(spec, h)), measure(rasterize(spec, h / 2))
    assert abs(a - b) <= perimeter * h


def test_interior_centers_satisfy_predicate():
    spec = DomainSpec.polygon([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)])
    d = rasterize(spec, 0.1)
    assert np.all(spec.contains(d.centers[:, 0], d.centers[:, 1]))
    # every exterior center fails it
    r, c = np.nonzero(~d.interior)
    x, y = d.center_of(r, c)
    assert not np.any(spec.contains(x, y))


def test_cell_index_is_row_major_bijection():
    d = rasterize(DomainSpec.disk(1), 0.2)
    idx = d.cell_index[d.interior]
    np.testing.assert_array_equal(idx, np.arange(d.n_cells))
    assert np.all(d.cell_index[~d.interior] == -1)
    np.testing.assert_array_equal(d.cell_index[d.rows, d.cols], np.arange(d.n_cells))


def test_padding_ring_is_exterior():
    d = rasterize(DomainSpec.disk(1), 0.1)
    assert not d.interior[0].any() and not d.interior[-1].any()
    assert not d.interior[:, 0].any() and not d.interior[:, -1].any()


def test_dumbbell_labels_partition():
    d = rasterize(DomainSpec.dumbbell(0.1), 1 / 32)
    lab = d.cell_labels
    assert set(np.unique(lab)) == {LEFT_LOBE, RIGHT_LOBE, HANDLE}
    x, y = d.centers.T
    assert np.all(x[lab == LEFT_LOBE] < 0) and np.all(x[lab == RIGHT_LOBE] > 0)
    # strip cells inside a lobe are tagged handle
    inside = (np.abs(y) < 0.1) & (np.abs(x) < 2)
    assert np.all(lab[inside] == HANDLE)


def test_dumbbell_is_mirror_symmetric():
    d = rasterize(DomainSpec.dumbbell(0.25), 1 / 16)
    np.testing.assert_array_equal(d.interior, d.interior[:, ::-1])
    np.testing.assert_array_equal(d.interior, d.interior[::-1, :])


@pytest.mark.parametrize("bad", [
    lambda: DomainSpec.annulus(0),
    lambda: DomainSpec.dumbbell(1.0),
    lambda: DomainSpec.dumbbell(0),
    lambda: DomainSpec.rectangle(0, 1),
    lambda: DomainSpec.disk(-1),
    lambda: DomainSpec.polygon([(0, 0), (1, 1), (1, 0), (0, 1)]),
])
def test_invalid_specs(bad):
    with pytest.raises(ValueError):
        bad()


def test_degenerate_grid():
    with pytest.raises(DegenerateGridError, match="degenerate grid"):
        rasterize(DomainSpec.rectangle(1, 1), 1.0)
    with pytest.raises(ValueError):
        rasterize(DomainSpec.disk(1), 0)


def test_rasterize_is_deterministic():
    a = rasterize(DomainSpec.annulus(1), 0.05)
    b = rasterize(DomainSpec.annulus(1), 0.05)
    assert a.interior.tobytes() == b.interior.tobytes()
    assert a.origin == b.origin


def test_mask_file_roundtrip(tmp_path):
    d = rasterize(DomainSpec.disk(1), 0.25)
    lines = ["P2", f"# h={d.h!r} origin={d.origin[0]!r} {d.origin[1]!r}", f"{d.nx} {d.ny}", "255"]
    lines += [" ".join("255" if v else "0" for v in row) for row in d.interior]
    p = tmp_path / "m.pgm"
    p.write_text("\n".join(lines) + "\n")
    m = read_mask_file(p)
    np.testing.assert_array_equal(m.interior, d.interior)
    np.testing.assert_allclose(m.centers, d.centers)
    m2 = rasterize(DomainSpec.mask_file(p), d.h)
    assert m2.n_cells == d.n_cells


def test_mask_file_errors(tmp_path):
    with pytest.raises(OSError):
        read_mask_file(tmp_path / "missing.pgm")
    p = tmp_path / "bad.pgm"
    p.write_text("P5\n1 1\n255\n0\n")
    with pytest.raises(OSError):
        read_mask_file(p)


@settings(max_examples=25, deadline=None)
@given(w=st.floats(0.3, 3), hgt=st.floats(0.3, 3), h=st.floats(0.02, 0.1))
def test_rectangle_measure_close(w, hgt, h):
    d = rasterize(DomainSpec.rectangle(w, hgt), h)
    assert measure(d) > 0
    assert measure(d) <= w * hgt
    assert w * hgt - measure(d) <= 2 * (w + hgt) * h
