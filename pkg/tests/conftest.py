from datetime import datetime

import pytest

from ctxcast.tasks import Context, TaskInstance


def ts(day: int, hour: int) -> datetime:
    return datetime(2024, 1, day, hour)


def make_fixture_task() -> TaskInstance:
    return TaskInstance(
        id="fixture",
        context=Context(
            background="Hourly electricity load of a small office building.",
            constraints_text=None,
            scenario="A maintenance shutdown will bring the load to zero at 04:00.",
        ),
        history=((ts(1, 0), 1.5), (ts(1, 1), 2.0), (ts(1, 2), 2.25)),
        pred_timestamps=(ts(1, 3), ts(1, 4)),
        future=(2.5, 0.0),
        roi=(1,),
    )


def make_fixture_example() -> TaskInstance:
    return TaskInstance(
        id="example",
        context=Context(
            background="Daily visitors to a museum.",
            constraints_text="Values are non-negative.",
            scenario=None,
        ),
        history=((ts(2, 0), 4.0), (ts(2, 1), 5.0)),
        pred_timestamps=(ts(2, 2),),
        future=(1.0,),
    )


@pytest.fixture
def fixture_task() -> TaskInstance:
    return make_fixture_task()


@pytest.fixture
def fixture_example() -> TaskInstance:
    return make_fixture_example()
