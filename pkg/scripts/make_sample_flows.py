"""Regenerate src/streamids/data/sample_flows.csv (CICFlowMeter-shaped, 1,000 rows)."""

import csv
from pathlib import Path

import numpy as np

FEATURES = [
    "Flow Duration", "Tot Fwd Pkts", "Tot Bwd Pkts", "TotLen Fwd Pkts", "TotLen Bwd Pkts",
    "Fwd Pkt Len Max", "Fwd Pkt Len Min", "Fwd Pkt Len Mean", "Fwd Pkt Len Std",
    "Bwd Pkt Len Max", "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std",
    "Flow Byts/s", "Flow Pkts/s", "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max", "Flow IAT Min",
    "Fwd IAT Tot", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Max", "Fwd IAT Min",
    "Bwd IAT Tot", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min",
    "Fwd PSH Flags", "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags",
    "Fwd Header Len", "Bwd Header Len", "Fwd Pkts/s", "Bwd Pkts/s",
    "Pkt Len Min", "Pkt Len Max", "Pkt Len Mean", "Pkt Len Std", "Pkt Len Var",
    "FIN Flag Cnt", "SYN Flag Cnt", "RST Flag Cnt", "PSH Flag Cnt", "ACK Flag Cnt", "URG Flag Cnt",
    "CWE Flag Count", "ECE Flag Cnt", "Down/Up Ratio", "Pkt Size Avg", "Fwd Seg Size Avg",
    "Bwd Seg Size Avg", "Fwd Byts/b Avg", "Fwd Pkts/b Avg", "Fwd Blk Rate Avg", "Bwd Byts/b Avg",
    "Bwd Pkts/b Avg", "Bwd Blk Rate Avg", "Subflow Fwd Pkts", "Subflow Fwd Byts",
    "Subflow Bwd Pkts", "Subflow Bwd Byts", "Init Fwd Win Byts", "Init Bwd Win Byts",
    "Fwd Act Data Pkts", "Fwd Seg Size Min", "Active Mean", "Active Std", "Active Max",
    "Active Min", "Idle Mean", "Idle Std", "Idle Max", "Idle Min",
]
# raw label, share, log-scale class offset, destination port
PROFILES = [
    ("BENIGN", 0.55, 0.0, 443),
    ("DoS-HTTP", 0.15, 1.6, 80),
    ("DoS-UDP", 0.10, 2.2, 53),
    ("PortScan", 0.12, -1.2, 22),
    ("Exfiltration", 0.08, 0.9, 8443),
]


def main(path: Path, n: int = 1000, seed: int = 11) -> None:
    rng = np.random.default_rng(seed)
    shares = np.array([p[1] for p in PROFILES])
    labels = rng.choice(len(PROFILES), size=n, p=shares / shares.sum())
    # how strongly each feature reacts to the class offset: a few strongly, most barely
    weight = 0.5 ** rng.permutation(len(FEATURES))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Flow ID", "Src IP", "Src Port", "Dst IP", "Dst Port", "Protocol", "Timestamp",
                    *FEATURES, "Label"])
        for i, k in enumerate(labels):
            raw, _, offset, port = PROFILES[k]
            vals = np.exp(rng.normal(offset * weight + np.linspace(0, 3, len(FEATURES)), 0.2))
            duration = 0.0 if rng.random() < 0.03 else vals[0]
            vals[0] = duration
            total = vals[3] + vals[4]
            # zero-duration flows give the same Infinity/NaN rate cells real exports contain
            vals[13] = np.inf if duration == 0 else total / duration
            vals[14] = np.nan if duration == 0 else (vals[1] + vals[2]) / duration
            src = f"192.168.{k}.{rng.integers(2, 250)}"
            dst = f"10.0.0.{rng.integers(2, 250)}"
            sport = int(rng.integers(1024, 65535))
            proto = 17 if raw == "DoS-UDP" else 6
            row = [f"{src}-{dst}-{sport}-{port}-{proto}", src, sport, dst, port, proto,
                   f"2022-03-01 10:{(i // 60) % 60:02d}:{i % 60:02d}",
                   *(f"{v:.6g}" if np.isfinite(v) else ("Infinity" if np.isinf(v) else "NaN") for v in vals),
                   raw]
            w.writerow(row)


if __name__ == "__main__":
    main(Path(__file__).resolve().parents[1] / "src" / "streamids" / "data" / "sample_flows.csv")
