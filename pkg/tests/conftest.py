"""Prints a one-line verdict per acceptance check after the run."""

ACCEPTANCE_LABELS = [
    ("test_1_recursive_state_consistency", "recursive state consistency"),
    ("test_2_weight_solve_oracle", "weight solve oracle"),
    ("test_3_variant_equivalences", "variant equivalences"),
    ("test_4_static_stream_convergence", "static stream convergence"),
    ("test_5_beats_first_order_baseline", "beats first-order baseline"),
    ("test_6_rotation_generator", "rotation generator"),
    ("test_7_baseline_gradient_check", "baseline gradient check"),
    ("test_8_cost_scaling_trend", "cost scaling trend"),
    ("test_9_io_round_trips", "io round trips"),
]


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for category in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(category, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" in nodeid:
                name = nodeid.split("::")[-1]
                verdict = "PASS" if category == "passed" else "FAIL"
                outcomes[name] = verdict
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance checks")
    for index, (name, label) in enumerate(ACCEPTANCE_LABELS, start=1):
        if name in outcomes:
            terminalreporter.write_line(
                f"acceptance {index} ({label}): {outcomes[name]}"
            )
