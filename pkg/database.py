"""
Database module for the barcode benchmark
Keeps every benchmark run in sqlite so the statistics stage can be rerun from stored scores
"""
import sqlite3
from typing import Dict, List, Optional

DATABASE = "barcode_runs.db"

SCORE_COLUMNS = ("accuracy", "macro_f1", "test_accuracy", "test_macro_f1")


def get_db_connection() -> sqlite3.Connection:
    conn = sqlite3.connect(DATABASE)
    conn.row_factory = sqlite3.Row
    return conn


def init_database() -> None:
    """Initialize the database with the runs table."""
    conn = get_db_connection()
    try:
        conn.execute(
            """
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                dataset TEXT NOT NULL,
                method TEXT NOT NULL,
                run_index INTEGER NOT NULL,
                seed INTEGER NOT NULL,
                ok INTEGER NOT NULL,
                message TEXT NOT NULL,
                accuracy REAL,
                macro_f1 REAL,
                test_accuracy REAL,
                test_macro_f1 REAL,
                footprint_bytes INTEGER,
                eval_ms REAL,
                UNIQUE (dataset, method, run_index)
            )
            """
        )
        conn.commit()
    finally:
        conn.close()


def _nullable(value: Optional[float]) -> Optional[float]:
    # sqlite has no NaN; failed or missing scores are stored as NULL
    if value is None or value != value:
        return None
    return float(value)


def insert_run_record(
    dataset: str,
    method: str,
    run_index: int,
    seed: int,
    ok: bool,
    message: str,
    accuracy: Optional[float] = None,
    macro_f1: Optional[float] = None,
    test_accuracy: Optional[float] = None,
    test_macro_f1: Optional[float] = None,
    footprint_bytes: Optional[int] = None,
    eval_ms: Optional[float] = None,
) -> bool:
    """Insert (or replace) one run of one method."""
    conn = get_db_connection()
    try:
        conn.execute(
            """
            INSERT OR REPLACE INTO runs (dataset, method, run_index, seed, ok, message, accuracy, macro_f1,
                                         test_accuracy, test_macro_f1, footprint_bytes, eval_ms)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            """,
            (
                dataset, method, run_index, seed, int(ok), message,
                _nullable(accuracy), _nullable(macro_f1), _nullable(test_accuracy), _nullable(test_macro_f1),
                footprint_bytes, _nullable(eval_ms),
            ),
        )
        conn.commit()
        return True
    except sqlite3.Error:
        return False
    finally:
        conn.close()


def clear_dataset(dataset: str) -> bool:
    """Drop every stored run of a dataset before it is benchmarked again."""
    conn = get_db_connection()
    try:
        conn.execute("DELETE FROM runs WHERE dataset = ?", (dataset,))
        conn.commit()
        return True
    except sqlite3.Error:
        return False
    finally:
        conn.close()


def get_all_datasets() -> List[str]:
    conn = get_db_connection()
    try:
        rows = conn.execute("SELECT DISTINCT dataset FROM runs ORDER BY dataset").fetchall()
        return [r["dataset"] for r in rows]
    finally:
        conn.close()


def get_run_records(dataset: str) -> List[Dict]:
    """Every stored run of a dataset in insertion order."""
    conn = get_db_connection()
    try:
        rows = conn.execute("SELECT * FROM runs WHERE dataset = ? ORDER BY id", (dataset,)).fetchall()
        return [dict(r) for r in rows]
    finally:
        conn.close()


def get_method_scores(dataset: str, metric: str = "accuracy") -> Dict[str, List[float]]:
    """
    Successful per-run scores grouped by method, methods in first-stored order.
    """
    if metric not in SCORE_COLUMNS:
        raise ValueError(f"Unknown metric '{metric}', expected one of {SCORE_COLUMNS}.")
    conn = get_db_connection()
    try:
        rows = conn.execute(
            f"""
            SELECT method, {metric} AS score
            FROM runs
            WHERE dataset = ? AND ok = 1 AND {metric} IS NOT NULL
            ORDER BY id
            """,
            (dataset,),
        ).fetchall()
        out: Dict[str, List[float]] = {}
        for r in rows:
            out.setdefault(r["method"], []).append(r["score"])
        return out
    finally:
        conn.close()
