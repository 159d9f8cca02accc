#!/usr/bin/env python3
"""
Experiment Run History Database

Stores and lists the `run` invocations of the command-line tool.
"""

import hashlib
import json
import logging
import os
import sqlite3
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)

DEFAULT_DB_NAME = "extremes_runs.db"


@dataclass
class RunRecord:
    """One recorded run"""
    run_id: int
    timestamp: str
    config_digest: str
    master_seed: int
    out_dir: str
    replications: int


def config_digest(config: Dict[str, Any]) -> str:
    """SHA-256 of the resolved config in canonical JSON form"""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class RunHistoryDatabase:
    """Database of experiment runs"""

    def __init__(self, db_path: Optional[str] = None):
        if db_path is None:
            db_path = os.path.join(os.getcwd(), DEFAULT_DB_NAME)
        self.db_path = os.path.abspath(db_path)
        self._init_db()

    def _init_db(self):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute('''
                CREATE TABLE IF NOT EXISTS run_history (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    timestamp TEXT NOT NULL,
                    config_digest TEXT NOT NULL,
                    master_seed INTEGER NOT NULL,
                    out_dir TEXT NOT NULL,
                    replications INTEGER NOT NULL
                )
            ''')
            conn.execute('CREATE INDEX IF NOT EXISTS idx_run_timestamp ON run_history(timestamp DESC)')
            conn.commit()

    def add_run(self, config: Dict[str, Any], master_seed: int, out_dir: str,
                replications: int) -> int:
        """Record a run and return its id"""
        digest = config_digest(config)
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.execute('''
                INSERT INTO run_history (timestamp, config_digest, master_seed, out_dir, replications)
                VALUES (?, ?, ?, ?, ?)
            ''', (datetime.now().isoformat(timespec="seconds"), digest, int(master_seed),
                  os.path.abspath(out_dir), int(replications)))
            conn.commit()
            run_id = int(cursor.lastrowid)
        logger.debug(f"Recorded run {run_id} ({digest[:12]}) in {self.db_path}")
        return run_id

    def get_recent_runs(self, limit: int = 20) -> List[RunRecord]:
        """Most recent runs first"""
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.execute('''
                SELECT id, timestamp, config_digest, master_seed, out_dir, replications
                FROM run_history
                ORDER BY id DESC
                LIMIT ?
            ''', (int(limit),))
            return [RunRecord(*row) for row in cursor.fetchall()]

    def find_by_digest(self, digest: str) -> List[RunRecord]:
        """Runs sharing a config digest (or digest prefix), oldest first"""
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.execute('''
                SELECT id, timestamp, config_digest, master_seed, out_dir, replications
                FROM run_history
                WHERE config_digest LIKE ?
                ORDER BY id ASC
            ''', (f"{digest}%",))
            return [RunRecord(*row) for row in cursor.fetchall()]

    def clear_history(self):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute('DELETE FROM run_history')
            conn.commit()
