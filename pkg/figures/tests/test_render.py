import hashlib
import json

import pytest

from cmzfigures import (
    EmptyInputError,
    FigureJob,
    MissingInputError,
    SchemaError,
    read_csv,
    render,
)
from cmzfigures.cli import main


def write_tail_csv(path, alpha="3.01"):
    path.write_text(
        f"# alpha_hat={alpha}\n# alpha_stderr=0.004\n# fit_lo=10\n# fit_hi=100\n"
        "n,survival,stderr,kind,exact\n"
        + "".join(f"{n},{n**-3.0!r},{1e-6!r},R,0\n" for n in range(1, 200))
    )
    return path


def write_corr_csvs(tmp_path):
    emp = tmp_path / "correlation.csv"
    emp.write_text(
        "n,estimate,stderr,samples\n"
        + "".join(f"{n},{(n**-2.0)!r},{1e-5!r},1000000\n" for n in range(1, 31))
    )
    pred = tmp_path / "predicted.csv"
    pred.write_text(
        "n,predicted\n" + "".join(f"{n},{(1.05 * n**-2.0)!r}\n" for n in range(1, 31))
    )
    return emp, pred


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_tail_annotation_equals_csv_fit_field(tmp_path):
    csv_path = write_tail_csv(tmp_path / "tail.csv", alpha="2.987")
    job = FigureJob(kind="tail", inputs=(str(csv_path),),
                    output=str(tmp_path / "fig"), reference_slope=3.0)
    result = render(job)
    # pass-through: the annotation is the CSV metadata value, not a re-fit
    assert result.annotations["fitted_slope"] == 2.987
    assert result.annotations["reference_slope"] == 3.0
    assert result.png.exists() and result.svg.exists()
    assert "2.987" in result.svg.read_text()


def test_rerender_is_pixel_identical(tmp_path):
    csv_path = write_tail_csv(tmp_path / "tail.csv")
    job = FigureJob(kind="tail", inputs=(str(csv_path),),
                    output=str(tmp_path / "fig"), reference_slope=3.0)
    first = render(job)
    png1, svg1 = sha(first.png), sha(first.svg)
    second = render(job)
    assert sha(second.png) == png1
    assert sha(second.svg) == svg1


def test_correlation_legend_entries(tmp_path):
    emp, pred = write_corr_csvs(tmp_path)
    job = FigureJob(kind="correlation", inputs=(str(emp), str(pred)),
                    output=str(tmp_path / "corr"))
    result = render(job)
    svg = result.svg.read_text()
    assert "empirical" in svg
    assert "predicted" in svg
    assert result.annotations["overlay"] == "predicted"


def test_z_growth_renders_theta(tmp_path):
    z = tmp_path / "z.csv"
    z.write_text("# fitted_theta=0.5\n# fitted_c=1.9\nm,z,leakage\n"
                 + "".join(f"{m},{(8000.0 * 0.5**m + 2.0)!r},0.0\n" for m in range(7)))
    job = FigureJob(kind="z-growth", inputs=(str(z),), output=str(tmp_path / "zfig"))
    result = render(job)
    assert result.annotations["fitted_theta"] == 0.5
    assert result.png.exists()


def test_missing_file_error_names_path(tmp_path):
    job = FigureJob(kind="tail", inputs=(str(tmp_path / "nope.csv"),),
                    output=str(tmp_path / "fig"))
    with pytest.raises(MissingInputError, match="nope.csv"):
        render(job)


def test_cli_missing_file_exit_code(tmp_path, capsys):
    doc = {"kind": "tail", "inputs": [str(tmp_path / "absent.csv")],
           "output": str(tmp_path / "fig")}
    job_path = tmp_path / "job.json"
    job_path.write_text(json.dumps(doc))
    assert main(["render", "--job", str(job_path)]) == 2
    assert "absent.csv" in capsys.readouterr().err


def test_empty_csv_error(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("n,survival,stderr,kind,exact\n")
    job = FigureJob(kind="tail", inputs=(str(empty),), output=str(tmp_path / "fig"))
    with pytest.raises(EmptyInputError):
        render(job)


def test_schema_mismatch_names_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n3,4\n")
    job = FigureJob(kind="tail", inputs=(str(bad),), output=str(tmp_path / "fig"))
    with pytest.raises(SchemaError, match="'n'"):
        render(job)


def test_cli_renders_job(tmp_path, capsys):
    csv_path = write_tail_csv(tmp_path / "tail.csv")
    doc = {"kind": "tail", "inputs": [str(csv_path)], "output": str(tmp_path / "out"),
           "reference_slope": 3.0}
    job_path = tmp_path / "job.json"
    job_path.write_text(json.dumps(doc))
    assert main(["render", "--job", str(job_path)]) == 0
    assert (tmp_path / "out.png").exists()
    assert (tmp_path / "out.svg").exists()


def test_metadata_read_back(tmp_path):
    csv_path = write_tail_csv(tmp_path / "tail.csv", alpha="3.14")
    table = read_csv(csv_path)
    assert table.metadata["alpha_hat"] == "3.14"
    assert table.floats("n")[0] == 1.0
