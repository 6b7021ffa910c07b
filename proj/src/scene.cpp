#include "rollplan/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace rollplan {

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }

Action::Action(double dx, double dy, double dgrip)
    : dx_(std::clamp(dx, -kMaxMove, kMaxMove)),
      dy_(std::clamp(dy, -kMaxMove, kMaxMove)),
      dgrip_(std::clamp(dgrip, -1.0, 1.0)) {}

const SceneObject* WorldState::find(int object_id) const {
  for (const auto& o : objects) {
    if (o.id == object_id) return &o;
  }
  return nullptr;
}

SceneObject* WorldState::find(int object_id) {
  for (auto& o : objects) {
    if (o.id == object_id) return &o;
  }
  return nullptr;
}

bool Region::contains(Vec2 p) const {
  if (shape == RegionShape::square) {
    return std::abs(p.x - center.x) <= radius && std::abs(p.y - center.y) <= radius;
  }
  return distance(p, center) <= radius;
}

const ObjectSpec& Task::object_spec(int object_id) const {
  for (const auto& s : objects) {
    if (s.id == object_id) return s;
  }
  throw std::invalid_argument("task '" + name + "' has no object " + std::to_string(object_id));
}

void Task::validate() const {
  if (horizon <= 0) throw std::invalid_argument("task horizon must be positive");
  if (success_radius < 0) throw std::invalid_argument("success_radius must be non-negative");
  object_spec(source_object);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].radius <= 0) throw std::invalid_argument("object radius must be positive");
    if (objects[i].color_id < 0 || objects[i].color_id > 2) {
      throw std::invalid_argument("color_id must be 0, 1 or 2");
    }
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      if (objects[i].id == objects[j].id) throw std::invalid_argument("duplicate object id");
      if (objects[i].color_id == objects[j].color_id) {
        throw std::invalid_argument("duplicate color id");
      }
    }
  }
  if (kind == TaskKind::stack) {
    if (!destination_object) throw std::invalid_argument("stack task needs a destination object");
    if (*destination_object == source_object) {
      throw std::invalid_argument("stack destination must differ from the source");
    }
    object_spec(*destination_object);
  } else if (!region) {
    throw std::invalid_argument("region task needs a destination region");
  }
}

WorldState reset(const Task& task, std::uint64_t seed) {
  task.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.15, 0.85);

  double max_radius = 0.0;
  for (const auto& s : task.objects) max_radius = std::max(max_radius, s.radius);
  const double min_sep = 2.5 * max_radius;

  WorldState state;
  state.objects.reserve(task.objects.size());
  for (const auto& spec : task.objects) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Vec2 p{coord(rng), coord(rng)};
      bool clear = std::all_of(state.objects.begin(), state.objects.end(),
                               [&](const SceneObject& o) { return distance(o.pos, p) >= min_sep; });
      if (clear) {
        state.objects.push_back({spec.id, p, spec.radius, spec.color_id});
        placed = true;
      }
    }
    if (!placed) {
      throw PlacementError("cannot place object " + std::to_string(spec.id) + " of task '" +
                           task.name + "' after 1000 attempts");
    }
  }
  return state;
}

WorldState step(const WorldState& state, const Action& action) {
  WorldState next = state;
  next.gripper_pos.x = std::clamp(state.gripper_pos.x + action.dx(), 0.0, 1.0);
  next.gripper_pos.y = std::clamp(state.gripper_pos.y + action.dy(), 0.0, 1.0);
  next.aperture = std::clamp(state.aperture + 0.5 * action.dgrip(), 0.0, 1.0);

  const bool closing = state.aperture >= kGripThreshold && next.aperture < kGripThreshold;
  const bool opening = state.aperture < kGripThreshold && next.aperture >= kGripThreshold;

  if (opening) {
    next.held.reset();
  } else if (closing && !next.held) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : next.objects) {
      const double d = distance(o.pos, next.gripper_pos);
      if (d <= kGraspRadius && d < best) {
        best = d;
        next.held = o.id;
      }
    }
  }

  if (next.held) {
    next.find(*next.held)->pos = next.gripper_pos;
  }
  next.step_count = state.step_count + 1;
  return next;
}

std::optional<Vec2> destination_point(const WorldState& state, const Task& task) {
  if (task.kind == TaskKind::stack) {
    const SceneObject* dest = state.find(*task.destination_object);
    if (!dest) return std::nullopt;
    return dest->pos;
  }
  return task.region->center;
}

bool is_success(const WorldState& state, const Task& task) {
  const SceneObject* src = state.find(task.source_object);
  if (!src) return false;
  if (state.held && *state.held == task.source_object) return false;
  if (task.kind == TaskKind::stack) {
    const SceneObject* dest = state.find(*task.destination_object);
    return dest && distance(src->pos, dest->pos) <= task.success_radius;
  }
  return task.region->contains(src->pos);
}

StepOutcome evaluate(const WorldState& state, const Task& task, bool episode_held_history) {
  StepOutcome out;
  out.state = state;
  out.success = is_success(state, task);
  out.partial_success = episode_held_history || out.success;
  out.terminated = out.success || state.step_count >= static_cast<std::uint32_t>(task.horizon);
  return out;
}

Task carrot_on_plate() {
  Task t;
  t.name = "carrot_on_plate";
  t.kind = TaskKind::put_on_region;
  t.source_object = 0;
  t.region = Region{{0.72, 0.72}, 0.09, RegionShape::circle};
  t.instruction_text = "put carrot on plate";
  t.objects = {{0, 0.08, 0}, {1, 0.08, 2}};
  return t;
}

Task spoon_on_cloth() {
  Task t;
  t.name = "spoon_on_cloth";
  t.kind = TaskKind::put_on_region;
  t.source_object = 0;
  t.region = Region{{0.28, 0.72}, 0.08, RegionShape::square};
  t.instruction_text = "put spoon on towel";
  t.objects = {{0, 0.08, 1}, {1, 0.08, 0}};
  return t;
}

Task eggplant_in_basket() {
  Task t;
  t.name = "eggplant_in_basket";
  t.kind = TaskKind::put_in_region;
  t.source_object = 0;
  t.region = Region{{0.5, 0.78}, 0.05, RegionShape::circle};
  t.instruction_text = "put eggplant into yellow basket";
  t.objects = {{0, 0.08, 2}, {1, 0.08, 1}};
  return t;
}

Task stack_blocks() {
  Task t;
  t.name = "stack_blocks";
  t.kind = TaskKind::stack;
  t.source_object = 0;
  t.destination_object = 1;
  t.instruction_text = "stack the green block on the yellow block";
  t.objects = {{0, 0.07, 1}, {1, 0.09, 0}, {2, 0.08, 2}};
  return t;
}

std::vector<Task> all_task_templates() {
  return {carrot_on_plate(), spoon_on_cloth(), stack_blocks(), eggplant_in_basket()};
}

Task task_by_name(const std::string& name) {
  for (auto& t : all_task_templates()) {
    if (t.name == name) return t;
  }
  throw std::invalid_argument("unknown task template '" + name + "'");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::put_on_region: return "put_on_region";
    case TaskKind::put_in_region: return "put_in_region";
    case TaskKind::stack: return "stack";
  }
  return "?";
}

Episode::Episode(Task task, std::uint64_t seed) : task_(std::move(task)) {
  state_ = reset(task_, seed);
  refresh();
}

Episode::Episode(Task task, WorldState initial) : task_(std::move(task)), state_(std::move(initial)) {
  task_.validate();
  refresh();
}

void Episode::refresh() {
  if (state_.held && *state_.held == task_.source_object) held_source_ = true;
  outcome_ = evaluate(state_, task_, held_source_);
}

const StepOutcome& Episode::apply(const Action& action) {
  if (outcome_.terminated) return outcome_;
  state_ = step(state_, action);
  refresh();
  return outcome_;
}

}  // namespace rollplan
