import threading

import pytest

from tabrag.annotation import (
    AnnotationError,
    PrefTask,
    QC_CRITERIA,
    QCTask,
    TaskStore,
    _task_from_dict,
    _task_to_dict,
)


class Clock:
    def __init__(self, start=1000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


def qc_task(i):
    return QCTask(
        task_id=f"qc{i}",
        serialized_tables=("[TITLE] t [HEADER] a [ROW 1] x",),
        question=f"question {i}?",
        insight=f"insight {i}",
    )


def pref_task(i):
    return PrefTask(
        task_id=f"pref{i}",
        question=f"question {i}?",
        model_a="model-alpha",
        insight_a=f"alpha insight {i}",
        model_b="model-beta",
        insight_b=f"beta insight {i}",
    )


def qc_values(score=5):
    return {c: score for c in QC_CRITERIA}


@pytest.fixture
def store(tmp_path):
    clock = Clock()
    s = TaskStore(tmp_path / "journal.jsonl", lease_s=60, clock=clock)
    s.test_clock = clock
    yield s
    s.close()


def test_create_tasks_counts(store):
    assert store.create_tasks([qc_task(i) for i in range(10)]) == 10
    assert store.counts()["open"] == 10


def test_create_duplicate_rejected(store):
    store.create_tasks([qc_task(1)])
    with pytest.raises(AnnotationError, match="qc1"):
        store.create_tasks([qc_task(1)])
    with pytest.raises(AnnotationError, match="qc2"):
        store.create_tasks([qc_task(2), qc_task(2)])


def test_persistence_round_trip(tmp_path):
    clock = Clock()
    store = TaskStore(tmp_path / "j.jsonl", clock=clock)
    store.create_tasks([qc_task(1), pref_task(1)])
    task = store.next_task("alice")
    store.submit_label("alice", task["task_id"], qc_values())
    store.close()

    reloaded = TaskStore(tmp_path / "j.jsonl", clock=clock)
    assert reloaded.counts()["total"] == 2
    # alice already labeled qc1, so she gets the preference task next
    nxt = reloaded.next_task("alice")
    assert nxt["task_id"] == "pref1"
    reloaded.close()


def test_dual_labeling_and_closure(store):
    store.create_tasks([qc_task(1)])
    a = store.next_task("alice")
    out = store.submit_label("alice", a["task_id"], qc_values(4))
    assert out == {"accepted": True, "closed": False}
    b = store.next_task("bob")
    assert b["task_id"] == "qc1"
    out = store.submit_label("bob", b["task_id"], qc_values(4))
    assert out["closed"] is True
    assert store.next_task("carol") is None


def test_lease_excludes_second_annotator_while_active(store):
    store.create_tasks([qc_task(1)])
    assert store.next_task("alice")["task_id"] == "qc1"
    assert store.next_task("bob") is None  # leased to alice
    store.test_clock.advance(61)
    assert store.next_task("bob")["task_id"] == "qc1"  # lease expired, re-issued


def test_annotator_with_nothing_left_gets_none(store):
    store.create_tasks([qc_task(1)])
    task = store.next_task("alice")
    store.submit_label("alice", task["task_id"], qc_values())
    assert store.next_task("alice") is None


def test_submit_requires_valid_lease(store):
    store.create_tasks([qc_task(1)])
    with pytest.raises(AnnotationError, match="lease"):
        store.submit_label("alice", "qc1", qc_values())
    store.next_task("alice")
    store.test_clock.advance(120)
    with pytest.raises(AnnotationError, match="lease"):
        store.submit_label("alice", "qc1", qc_values())


def test_submit_validates_qc_range(store):
    store.create_tasks([qc_task(1)])
    store.next_task("alice")
    bad = qc_values()
    bad[QC_CRITERIA[0]] = 6
    with pytest.raises(AnnotationError, match="1..5"):
        store.submit_label("alice", "qc1", bad)
    with pytest.raises(AnnotationError, match="exactly the criteria"):
        store.submit_label("alice", "qc1", {QC_CRITERIA[0]: 3})


def test_submit_validates_pref_completeness(store):
    store.create_tasks([pref_task(1)])
    store.next_task("alice")
    with pytest.raises(AnnotationError, match="both dimensions"):
        store.submit_label("alice", "pref1", {"faithfulness": "win"})
    with pytest.raises(AnnotationError, match="one of"):
        store.submit_label("alice", "pref1", {"faithfulness": "win", "completeness": "maybe"})


def test_pref_payload_blinds_model_identity(store):
    store.create_tasks([pref_task(1)])
    payload = store.next_task("alice")
    flat = str(payload)
    assert "model-alpha" not in flat and "model-beta" not in flat
    assert {"insight_left", "insight_right"} <= set(payload)


def test_no_double_lease_under_storm(tmp_path):
    store = TaskStore(tmp_path / "j.jsonl", lease_s=3600)
    store.create_tasks([qc_task(i) for i in range(5)])
    grabbed: list[tuple[str, str]] = []
    lock = threading.Lock()

    def grab(annotator):
        for _ in range(10):
            task = store.next_task(annotator)
            if task is None:
                return
            with lock:
                grabbed.append((task["task_id"], annotator))

    threads = [threading.Thread(target=grab, args=(f"ann{i}",)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    # while leases are live, no task may be held by two different annotators
    by_task: dict[str, set[str]] = {}
    for task_id, annotator in grabbed:
        by_task.setdefault(task_id, set()).add(annotator)
    for task_id, annotators in by_task.items():
        assert len(annotators) == 1, f"{task_id} leased to {sorted(annotators)}"
    store.close()


def label_pref(store, task_id, annotator, faith, comp):
    task = store.next_task(annotator)
    assert task["task_id"] == task_id
    store.submit_label(annotator, task_id, {"faithfulness": faith, "completeness": comp})


def test_agreement_report_identical_labels(store):
    store.create_tasks([qc_task(1), qc_task(2)])
    per_task_score = {"qc1": 5, "qc2": 4}
    for annotator in ("alice", "bob"):
        for _ in range(2):
            task = store.next_task(annotator)
            store.submit_label(annotator, task["task_id"], qc_values(per_task_score[task["task_id"]]))
    report = store.agreement_report("qc")
    entry = report["per_criterion"][QC_CRITERIA[0]]
    assert entry["percent_agreement"] == 1.0
    assert entry["pct_mean_score_ge_4"] == 100.0
    assert entry["kappa"] == pytest.approx(1.0)


def test_agreement_constant_labels_kappa_undefined(store):
    store.create_tasks([qc_task(1), qc_task(2)])
    for annotator in ("alice", "bob"):
        for _ in range(2):
            task = store.next_task(annotator)
            store.submit_label(annotator, task["task_id"], qc_values(5))
    entry = store.agreement_report("qc")["per_criterion"][QC_CRITERIA[0]]
    assert entry["percent_agreement"] == 1.0
    assert entry["kappa"] is None and "undefined" in entry["kappa_error"]


def test_agreement_report_hand_fixture(tmp_path):
    store = TaskStore(tmp_path / "j.jsonl", lease_s=3600)
    scores_a = [5, 4, 2, 5, 1, 3, 4, 4, 2, 5]
    scores_b = [5, 4, 2, 5, 2, 3, 4, 5, 2, 5]
    store.create_tasks([qc_task(i) for i in range(10)])
    for i in range(10):
        for annotator, score in (("alice", scores_a[i]), ("bob", scores_b[i])):
            task = store.next_task(annotator)
            store.submit_label(annotator, task["task_id"], qc_values(score))
    report = store.agreement_report("qc")
    entry = report["per_criterion"][QC_CRITERIA[0]]
    # hand computation: 8/10 exact agreement
    assert entry["percent_agreement"] == pytest.approx(0.8)
    # mean >= 4 on tasks 0,1,3,6,7,9
    assert entry["pct_mean_score_ge_4"] == pytest.approx(60.0)
    # p_o = 0.8, p_e = 0.25 from the score marginals, kappa = 0.55 / 0.75
    assert entry["kappa"] == pytest.approx(11 / 15, abs=1e-9)
    again = store.agreement_report("qc")
    assert again["per_criterion"][QC_CRITERIA[0]]["kappa_ci"] == entry["kappa_ci"]
    store.close()


def test_agreement_requires_doubly_labeled(store):
    store.create_tasks([qc_task(1)])
    task = store.next_task("alice")
    store.submit_label("alice", task["task_id"], qc_values())
    with pytest.raises(AnnotationError, match="doubly-labeled"):
        store.agreement_report("qc")


def test_export_preferences_derandomizes(tmp_path):
    # find a seed/task pair where left shows model_b (flipped)
    store = TaskStore(tmp_path / "j.jsonl", lease_s=3600, randomize_seed=0)
    store.create_tasks([pref_task(i) for i in range(6)])
    flipped = {tid: state.flipped for tid, state in store._tasks.items()}
    assert any(flipped.values()) and not all(flipped.values())
    for i in range(6):
        label_pref(store, f"pref{i}", "alice", "win", "tie")
    for i in range(6):
        label_pref(store, f"pref{i}", "bob", "win", "tie")
    records = store.export_preferences()
    for rec in records:
        if rec["dimension"] == "faithfulness":
            want = -1 if flipped[rec["pair_id"]] else 1  # left-win flips sign
            assert rec["value"] == want
        else:
            assert rec["value"] == 0  # ties stay ties
    store.close()


def test_task_dict_round_trip():
    for task in (qc_task(1), pref_task(1)):
        assert _task_from_dict(_task_to_dict(task)) == task
