from datetime import datetime, timedelta

import pytest

ACTIVITY_SENSOR = {
    "Sleeping": "Bed", "Toileting": "Toilet", "Showering": "Shower", "Breakfast": "Toaster",
    "Grooming": "Basin", "Spare_Time/TV": "Seat", "Leaving": "Maindoor", "Lunch": "Cooktop",
    "Snack": "Fridge", "Dinner": "Microwave",
}
EXTRA_SENSORS = ["Cupboard", "Lamp"]  # Lamp is listed but never fires
FMT = "%Y-%m-%d %H:%M:%S"


def write_adl_fixture(root, cycles=5, activity_s=300, gap_s=60, reversed_row=True,
                      overlap=False):
    """UCI-style description, sensor and activity files for a synthetic subject.

    Each cycle runs every activity once, each followed by an unlabeled gap, so
    every split of the resulting series sees all activities and ``Other``.
    Returns ``(description, sensors, activities)`` paths.
    """
    origin = datetime(2011, 11, 28, 0, 0, 0)
    sensor_rows, activity_rows = [], []
    t = origin
    for _ in range(cycles):
        for name, sensor in ACTIVITY_SENSOR.items():
            start, end = t, t + timedelta(seconds=activity_s - 1)
            activity_rows.append((start, end, name))
            sensor_rows.append((start + timedelta(seconds=10), end - timedelta(seconds=10),
                                sensor))
            sensor_rows.append((start + timedelta(seconds=30), start + timedelta(seconds=40),
                                "Cupboard"))
            t = end + timedelta(seconds=gap_s + 1)
    if reversed_row:
        a = activity_rows[3]
        activity_rows.insert(4, (a[1] + timedelta(seconds=30), a[1] + timedelta(seconds=5),
                                 "Snack"))
    if overlap:
        a = activity_rows[6]
        activity_rows.append((a[0] + timedelta(seconds=20), a[1], "Grooming"))

    description = root / "OrdonezA_Description.txt"
    lines = ["Subject A", "", "Location\tType\tPlace", "--------\t----\t-----"]
    for sensor in list(ACTIVITY_SENSOR.values()) + EXTRA_SENSORS:
        lines.append(f"{sensor}\tPIR\tHouse")
    description.write_text("\n".join(lines) + "\n\nActivities\n", encoding="utf-8")

    sensors = root / "OrdonezA_Sensors.txt"
    out = ["Start time\t\tEnd time\t\tLocation\tType\tPlace",
           "----------\t\t--------\t\t--------\t----\t-----"]
    for s, e, name in sensor_rows:
        out.append(f"{s.strftime(FMT)}\t\t{e.strftime(FMT)}\t\t{name}\tPIR\tHouse")
    sensors.write_text("\n".join(out) + "\n", encoding="utf-8")

    activities = root / "OrdonezA_ADLs.txt"
    out = ["\t\tStart time\t\tEnd time\t\tActivity",
           "\t\t----------\t\t--------\t\t--------"]
    for s, e, name in activity_rows:
        out.append(f"{s.strftime(FMT)}\t\t{e.strftime(FMT)}\t\t{name}\t\t")
    activities.write_text("\n".join(out) + "\n", encoding="utf-8")
    return description, sensors, activities


@pytest.fixture
def adl_files(tmp_path):
    return write_adl_fixture(tmp_path)


# one line per acceptance criterion, printed after the run whatever the outcome
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
