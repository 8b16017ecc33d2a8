"""Survey parsing, tour chaining, and the train/test split."""

import csv
import os

import pytest

from mclab.core import Purpose
from mclab.errors import SchemaError
from mclab.survey import (
    Population,
    build_tours,
    estimation_trips,
    parse_survey,
    split_train_test,
)

from conftest import BASE_LAT, BASE_LON, make_household, make_person, make_trip, north_of


def _files(directory):
    return (os.path.join(directory, "household.csv"),
            os.path.join(directory, "person.csv"),
            os.path.join(directory, "trip.csv"))


class TestParseSurvey:
    def test_fixture_counts(self, survey_dir):
        pop = parse_survey(*_files(survey_dir))
        assert len(pop.households) == 3
        assert len(pop.persons) == 5
        assert len(pop.trips) == 12

    def test_rejections_counted(self, survey_dir):
        pop = parse_survey(*_files(survey_dir))
        assert pop.rejections.trips == 3
        assert pop.rejections.reasons["trip_dangling_person"] == 1
        assert pop.rejections.reasons["trip_missing_coordinates"] == 1
        assert pop.rejections.reasons["trip_nonpositive_duration"] == 1

    def test_conservation(self, survey_dir):
        pop = parse_survey(*_files(survey_dir))
        with open(os.path.join(survey_dir, "trip.csv")) as fh:
            rows_in = sum(1 for _ in csv.DictReader(fh))
        assert rows_in == len(pop.trips) + pop.rejections.trips

    def test_empty_trip_file(self, survey_dir, tmp_path):
        empty = tmp_path / "empty_trips.csv"
        with open(os.path.join(survey_dir, "trip.csv")) as fh:
            header = fh.readline()
        empty.write_text(header)
        h, p, _ = _files(survey_dir)
        pop = parse_survey(h, p, str(empty))
        assert len(pop.trips) == 0
        assert len(pop.persons) == 5

    def test_malformed_header(self, survey_dir, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("foo,bar\n1,2\n")
        h, p, t = _files(survey_dir)
        with pytest.raises(SchemaError):
            parse_survey(str(bad), p, t)

    def test_unreadable_file(self, survey_dir):
        h, p, _ = _files(survey_dir)
        with pytest.raises(OSError):
            parse_survey(h, p, "/nonexistent/trips.csv")


def _population(trips, households=None, persons=None):
    households = households or [make_household()]
    persons = persons or [make_person()]
    return Population(
        households={h.id: h for h in households},
        persons={p.id: p for p in persons},
        trips={t.id: t for t in trips},
    )


HOME = None  # sentinel for readability in the chain helpers


def _chain(points_and_times, pid="p1", mode="Walk"):
    """Build trips through a list of (origin, dest, depart_sec, arrive_sec)."""
    trips = []
    for i, (o, d, dep, arr) in enumerate(points_and_times):
        trips.append(
            make_trip(f"{pid}-x{i}", pid=pid, origin=o, destination=d,
                      depart_sec=dep, arrive_sec=arr, mode=mode,
                      purpose=Purpose.WORK if i == 0 else Purpose.SHOP)
        )
    return trips


class TestBuildTours:
    home = north_of(0.0)
    work = north_of(3.0)
    shop = north_of(5.0)

    def test_minimal_closed_tour(self):
        trips = _chain([(self.home, self.work, 28800, 30000),
                        (self.work, self.home, 60000, 61000)])
        pop = build_tours(_population(trips))
        assert len(pop.tours) == 1
        tour = next(iter(pop.tours.values()))
        assert tour.n_legs == 2
        assert tour.is_closed and tour.starts_at_home

    def test_three_leg_purposes(self):
        trips = _chain([(self.home, self.work, 28800, 30000),
                        (self.work, self.shop, 60000, 61000),
                        (self.shop, self.home, 62000, 63000)])
        pop = build_tours(_population(trips))
        tour = next(iter(pop.tours.values()))
        purposes = [pop.trips[tid].purpose for tid in tour.trip_ids]
        assert purposes == [Purpose.WORK, Purpose.SHOP, Purpose.RETURN_HOME]
        assert [pop.trips[tid].leg_index for tid in tour.trip_ids] == [0, 1, 2]

    def test_open_tour_flagged(self):
        trips = _chain([(self.home, self.work, 28800, 30000)])
        pop = build_tours(_population(trips))
        tour = next(iter(pop.tours.values()))
        assert tour.starts_at_home and not tour.is_closed

    def test_two_tours_split_at_home(self):
        trips = _chain([
            (self.home, self.work, 28800, 30000),
            (self.work, self.home, 40000, 41000),
            (self.home, self.shop, 50000, 51000),
            (self.shop, self.home, 52000, 53000),
        ])
        pop = build_tours(_population(trips))
        assert len(pop.tours) == 2
        assert all(t.is_closed for t in pop.tours.values())

    def test_overlap_drops_later_trip(self):
        trips = _chain([(self.home, self.work, 28800, 36000),
                        (self.work, self.home, 30000, 37000)])  # departs mid-flight
        pop = build_tours(_population(trips))
        assert len(pop.trips) == 1
        assert pop.rejections.reasons["trip_overlaps_previous"] == 1

    def test_chain_tolerance(self):
        near_work = north_of(3.05)  # 0.05 mi from work, within 300 m
        trips = _chain([(self.home, self.work, 28800, 30000),
                        (near_work, self.home, 60000, 61000)])
        pop = build_tours(_population(trips))
        assert len(pop.tours) == 1
        assert next(iter(pop.tours.values())).is_closed

    def test_every_trip_in_exactly_one_tour(self):
        trips = _chain([
            (self.home, self.work, 28800, 30000),
            (self.work, self.shop, 40000, 41000),
            (north_of(9.0), self.home, 50000, 51000),  # discontinuity
        ])
        pop = build_tours(_population(trips))
        seen = [tid for tour in pop.tours.values() for tid in tour.trip_ids]
        assert sorted(seen) == sorted(pop.trips)
        assert len(seen) == len(set(seen))

    def test_estimation_filter(self):
        closed = _chain([(self.home, self.work, 28800, 30000),
                         (self.work, self.home, 40000, 41000)])
        excluded = [make_trip("taxi0", origin=self.home, destination=self.work,
                              depart_sec=50000, arrive_sec=51000, mode="Taxi"),
                    make_trip("taxi1", origin=self.work, destination=self.home,
                              depart_sec=52000, arrive_sec=53000, mode="Taxi")]
        pop = build_tours(_population(closed + excluded))
        eligible = estimation_trips(pop)
        assert [t.id for t in eligible] == [closed[0].id]


class TestSplit:
    def _pop(self, n):
        households = [make_household(f"h{i}") for i in range(n)]
        return _population([], households=households, persons=[])

    def test_ten_households_eight_two(self):
        split = split_train_test(self._pop(10), 0.8, seed=7)
        assert len(split.train_households()) == 8
        assert len(split.test_households()) == 2

    def test_pinned_assignment_regression(self):
        # frozen output of the seeded hash ranking; a change here means the
        # split function changed behavior
        split = split_train_test(self._pop(10), 0.8, seed=7)
        assert sorted(split.test_households()) == ["h2", "h3"]

    def test_boundary_fraction(self):
        split = split_train_test(self._pop(10), 1 - 1e-9, seed=1)
        assert len(split.train_households()) == 10

    def test_determinism(self):
        a = split_train_test(self._pop(50), 0.8, seed=123)
        b = split_train_test(self._pop(50), 0.8, seed=123)
        assert a.assignment == b.assignment

    def test_seed_changes_assignment(self):
        a = split_train_test(self._pop(50), 0.8, seed=1)
        b = split_train_test(self._pop(50), 0.8, seed=2)
        assert a.assignment != b.assignment

    def test_partition_exhaustive_and_disjoint(self):
        pop = self._pop(33)
        split = split_train_test(pop, 0.8, seed=5)
        assert split.train_households() | split.test_households() == set(pop.households)
        assert not (split.train_households() & split.test_households())

    def test_fraction_within_two_points(self):
        pop = self._pop(100)
        split = split_train_test(pop, 0.8, seed=11)
        realized = len(split.train_households()) / 100
        assert abs(realized - 0.8) <= 0.02

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            split_train_test(self._pop(10), 1.0, seed=1)
