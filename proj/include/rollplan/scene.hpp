#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rollplan {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

double distance(Vec2 a, Vec2 b);
double norm(Vec2 a);

inline constexpr double kMaxMove = 0.08;
inline constexpr double kGraspRadius = 0.04;
inline constexpr double kGripThreshold = 0.5;
inline constexpr Vec2 kGripperStart{0.5, 0.1};

/// Planar end-effector command. Components are clamped to their bounds on
/// construction, so an Action value is always valid.
class Action {
 public:
  Action() = default;
  Action(double dx, double dy, double dgrip);

  double dx() const { return dx_; }
  double dy() const { return dy_; }
  double dgrip() const { return dgrip_; }
  std::array<double, 3> as_array() const { return {dx_, dy_, dgrip_}; }

  friend bool operator==(const Action&, const Action&) = default;

 private:
  double dx_ = 0.0;
  double dy_ = 0.0;
  double dgrip_ = 0.0;
};

struct SceneObject {
  int id = 0;
  Vec2 pos;
  double radius = 0.08;
  int color_id = 0;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct WorldState {
  Vec2 gripper_pos = kGripperStart;
  double aperture = 1.0;
  std::vector<SceneObject> objects;
  std::optional<int> held;
  std::uint32_t step_count = 0;

  const SceneObject* find(int object_id) const;
  SceneObject* find(int object_id);

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

enum class TaskKind { put_on_region, put_in_region, stack };
enum class RegionShape { circle, square };

struct Region {
  Vec2 center;
  double radius = 0.08;  // half-width for squares
  RegionShape shape = RegionShape::circle;

  bool contains(Vec2 p) const;
};

struct ObjectSpec {
  int id = 0;
  double radius = 0.08;
  int color_id = 0;
};

struct Task {
  std::string name;
  TaskKind kind = TaskKind::put_on_region;
  int source_object = 0;
  std::optional<Region> region;           // put_on_region / put_in_region
  std::optional<int> destination_object;  // stack
  std::string instruction_text;
  int horizon = 120;
  double success_radius = 0.03;
  std::vector<ObjectSpec> objects;

  const ObjectSpec& object_spec(int object_id) const;
  /// Throws std::invalid_argument when the template is inconsistent.
  void validate() const;
};

struct StepOutcome {
  WorldState state;
  bool success = false;
  bool partial_success = false;
  bool terminated = false;
};

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seeded episode initialisation. Throws PlacementError when the template
/// cannot be placed within 1000 rejection-sampling attempts.
WorldState reset(const Task& task, std::uint64_t seed);

WorldState step(const WorldState& state, const Action& action);

StepOutcome evaluate(const WorldState& state, const Task& task, bool episode_held_history);

bool is_success(const WorldState& state, const Task& task);

inline WorldState clone_env(const WorldState& state) { return state; }

/// Position of the destination the source object must reach, or nullopt when
/// the destination object is missing from the state.
std::optional<Vec2> destination_point(const WorldState& state, const Task& task);

// Task templates.
Task carrot_on_plate();
Task spoon_on_cloth();
Task eggplant_in_basket();
Task stack_blocks();
std::vector<Task> all_task_templates();
/// Throws std::invalid_argument for unknown names.
Task task_by_name(const std::string& name);

std::string to_string(TaskKind kind);

/// Stateful wrapper over reset/step/evaluate that tracks the per-episode
/// grasp history and termination.
class Episode {
 public:
  Episode(Task task, std::uint64_t seed);
  Episode(Task task, WorldState initial);

  const WorldState& state() const { return state_; }
  const Task& task() const { return task_; }
  const StepOutcome& outcome() const { return outcome_; }
  bool terminated() const { return outcome_.terminated; }

  const StepOutcome& apply(const Action& action);

 private:
  void refresh();

  Task task_;
  WorldState state_;
  bool held_source_ = false;
  StepOutcome outcome_;
};

}  // namespace rollplan
