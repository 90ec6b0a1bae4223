import pytest

from conftest import make_sources, write_truth
from trapzbench.dataset import (
    Manifest,
    SweepGrid,
    TruthParseError,
    default_grid,
    load_truth,
    synthesize_sweep,
    variant_name,
)
from trapzbench.geometry import DistortionParams, apply_homography, homography_from_params, rectangle
from trapzbench.raster import read_image
from trapzbench.records import DateFormatError, RecordError


class TestGrid:
    def test_default(self):
        g = default_grid()
        assert len(g.thetas) == 19 and g.thetas[0] == -90 and g.thetas[-1] == 90
        assert g.exponents == (-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2)
        assert g.ratios[0] == 0.25 and g.ratios[-1] == 4
        assert len(g) == 171 == len(list(g.cells()))

    def test_parse(self):
        g = SweepGrid.parse("-10,0,10;0,1")
        assert g.thetas == (-10, 0, 10) and g.exponents == (0, 1)
        assert SweepGrid.parse("default;0").thetas == default_grid().thetas

    def test_parse_rejects(self):
        with pytest.raises(ValueError):
            SweepGrid.parse("1,2,3")
        with pytest.raises(ValueError):
            SweepGrid.parse("a;1")

    def test_variant_name(self):
        assert variant_name("r1", -90.0, -1.5) == "r1/theta_-90_r_-1.5.png"
        assert variant_name("r1", 0.0, 2.0) == "r1/theta_0_r_2.png"


class TestTruth:
    def test_loads_decimal(self, truth_path):
        rec = load_truth(truth_path)
        assert str(rec.subtotal) == "71.4"  # json.dumps wrote 71.4
        assert str(rec.total) == "77.11"

    def test_syntax_error_has_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "Vendor": "x",\n  oops\n}')
        with pytest.raises(TruthParseError, match=r"bad\.json:3:3"):
            load_truth(p)

    def test_date_error_keeps_type(self, tmp_path):
        with pytest.raises(DateFormatError, match="t.json"):
            load_truth(write_truth(tmp_path / "t.json", Date="14/03/2020"))

    def test_type_error_names_file_and_field(self, tmp_path):
        with pytest.raises(RecordError, match=r"t\.json: Total"):
            load_truth(write_truth(tmp_path / "t.json", Total="77.11"))


class TestSweep:
    GRID = SweepGrid((-30.0, 0.0, 45.0), (-1.0, 0.0, 1.5))

    def test_entries_and_files(self, tmp_path):
        src = make_sources(tmp_path, 2)
        m = synthesize_sweep(src, self.GRID, tmp_path / "out", jobs=2)
        assert len(m.entries) == 18 and not m.failures
        assert m.source_ids() == ["rcpt00", "rcpt01"]
        for e in m.entries:
            img = read_image(m.variant(e))
            assert e.homography.allclose(homography_from_params(e.extent, DistortionParams(e.theta_deg, e.r)))
            # the warped quad fits the stored canvas
            q = [(p.x + e.offset.x, p.y + e.offset.y) for p in _corners(e)]
            assert all(-1e-6 <= x <= img.width + 1e-6 and -1e-6 <= y <= img.height + 1e-6 for x, y in q)

    def test_manifest_round_trip(self, tmp_path):
        m = synthesize_sweep(make_sources(tmp_path, 1), self.GRID, tmp_path / "out")
        back = Manifest.read(tmp_path / "out")
        assert back.entries == m.entries
        assert back.root == m.root

    def test_resume_keeps_files_and_hashes(self, tmp_path):
        src = make_sources(tmp_path, 1)
        m1 = synthesize_sweep(src, self.GRID, tmp_path / "out")
        target = m1.variant(m1.entries[0])
        mtime = target.stat().st_mtime_ns
        m2 = synthesize_sweep(src, self.GRID, tmp_path / "out")
        assert target.stat().st_mtime_ns == mtime
        assert [e.sha256 for e in m2.entries] == [e.sha256 for e in m1.entries]
        assert [e.offset for e in m2.entries] == [e.offset for e in m1.entries]

    def test_bad_source_recorded(self, tmp_path):
        src = make_sources(tmp_path, 2)
        bad_truth = write_truth(tmp_path / "truths" / "rcpt01.json", Date="nope")
        m = synthesize_sweep([src[0], (src[1][0], bad_truth)], self.GRID, tmp_path / "out")
        assert len(m.entries) == 9
        assert len(m.failures) == 1 and m.failures[0]["source_id"] == "rcpt01"
        back = Manifest.read(m.path)
        assert back.failures == m.failures

    def test_oversize_cell_recorded(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TRAPZ_MAX_CANVAS", "70")
        src = make_sources(tmp_path, 1, width=40, height=60)
        m = synthesize_sweep(src, SweepGrid((0.0, 45.0), (0.0,)), tmp_path / "out")
        assert [e.theta_deg for e in m.entries] == [0.0]
        assert m.failures[0]["theta_deg"] == 45.0 and "exceeds" in m.failures[0]["error"]

    def test_duplicate_ids_rejected(self, tmp_path):
        src = make_sources(tmp_path, 1)
        with pytest.raises(ValueError):
            synthesize_sweep([src[0], src[0]], self.GRID, tmp_path / "out")

    def test_duplicate_manifest_line(self, tmp_path):
        m = synthesize_sweep(make_sources(tmp_path, 1), SweepGrid((0.0,), (0.0,)), tmp_path / "out")
        text = m.path.read_text()
        m.path.write_text(text + text)
        with pytest.raises(ValueError, match="duplicate"):
            Manifest.read(m.path)


def _corners(e):
    return [apply_homography(e.homography, p) for p in rectangle(e.extent)]
