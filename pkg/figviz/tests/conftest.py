import csv

import pytest


@pytest.fixture
def write_csv(tmp_path):
    """Write a table the way the simulator CLI does: header, LF, UTF-8."""

    def _write(name, header, rows):
        path = tmp_path / name
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return path

    return _write
