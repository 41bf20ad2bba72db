import logging
import os
import sys

from main import load_config
from services import experiment_service, file_service

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")

# (config, trend file, what the flag means)
CHECKS = [
    ("theorem_trend.json", "trend_gap.json", "median sup |Qtilde - What| decreasing, margin 0.05"),
    ("theorem_trend.json", "trend_above_u_1.json", "median sup work above u nonincreasing (eps=1)"),
    ("theorem_trend.json", "trend_theta_x_1.json", "median sup c r theta(., 1) decreasing"),
    # Exp(1) has l = 0 at every r here; Weibull(2, 1) keeps l > 0
    ("theorem_trend.json", "trend_below_l_1.json", "median sup mass below l nonincreasing (eps=1)"),
    ("theorem_trend_weibull.json", "trend_gap.json", "Weibull(2,1): median sup |Qtilde - What| decreasing"),
    ("theorem_trend_weibull.json", "trend_below_l_1.json", "Weibull(2,1): median sup mass below l nonincreasing"),
    ("theorem_trend_weibull.json", "trend_theta_eps_1.json", "Weibull(2,1): median sup c^(2+eps) theta_eps decreasing"),
]


def verify_theorem_trend(out_dir: str, workers: int) -> bool:
    ok = True
    for config in dict.fromkeys(c for c, _, _ in CHECKS):
        target = os.path.join(out_dir, os.path.splitext(config)[0])
        experiment_service.run_experiment(load_config(os.path.join(CONFIG_DIR, config)), out_dir=target,
                                          workers=workers)
        for _, name, meaning in (check for check in CHECKS if check[0] == config):
            report = file_service.read_json(os.path.join(target, name))
            print(f"\n--- {config}: {report['statistic']} ---")
            print(f"r:       {report['r']}")
            print(f"medians: {report['median']}")
            if report.get("unavailable"):
                print(f"unavailable at r = {report['unavailable']}")
            if report.get("ks_terminal"):
                print(f"terminal KS vs RBM marginal: {report['ks_terminal']}")
            if report.get("ks_terminal_simulated"):
                print(f"terminal KS vs simulated W*: {report['ks_terminal_simulated']}")
            flag = report["monotone_decreasing"]
            if flag is None:
                print(f"UNAVAILABLE: {meaning} (fewer than two r-values have the statistic)")
            elif flag:
                print(f"SUCCESS: {meaning}")
            else:
                print(f"FAILURE: {meaning}")
                ok = False
    return ok


if __name__ == "__main__":
    workers = int(os.getenv("SRPT_LAB_WORKERS", "4"))
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join("out", "verify_theorem_trend")
    sys.exit(0 if verify_theorem_trend(out, workers) else 1)
