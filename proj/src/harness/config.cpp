// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "core/error.hpp"
#include "core/format.hpp"
#include "core/rng.hpp"

namespace wiper {

std::string_view defense_name(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::wiper: return "wiper";
    case DefenseKind::fine_pruning: return "fine_pruning";
    case DefenseKind::fine_tuning: return "fine_tuning";
    case DefenseKind::kd: return "kd";
  }
  return "none";
}

std::optional<DefenseKind> parse_defense(std::string_view name) {
  for (auto k : {DefenseKind::none, DefenseKind::wiper, DefenseKind::fine_pruning, DefenseKind::fine_tuning,
                 DefenseKind::kd})
    if (defense_name(k) == name) return k;
  return std::nullopt;
}

std::string_view precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

std::optional<Precision> parse_precision(std::string_view name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  return std::nullopt;
}

PurifyConfig ExperimentConfig::desk_purify_defaults() {
  PurifyConfig p;
  p.learning_rate = 1.0;
  p.batch_size = 16;
  return p;
}

Architecture ExperimentConfig::model_arch() const {
  Architecture a = arch;
  a.input = data.input;
  a.classes = data.classes;
  return a;
}

double ExperimentConfig::effective_injection_rate() const {
  if (injection_rate) return *injection_rate;
  return poison.attack == AttackKind::sig ? 0.1 : 0.05;
}

PoisonSpec ExperimentConfig::poison_spec() const {
  PoisonSpec p = poison;
  p.injection_rate = effective_injection_rate();
  return p;
}

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  fail(ErrorCode::config, "config: " + std::string(key) + "=" + std::string(value) + " (expected " +
                              std::string(want) + ")");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, v, "a nonnegative integer");
  return out;
}

std::size_t to_size(std::string_view key, std::string_view v) { return static_cast<std::size_t>(to_u64(key, v)); }

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto stop = comma == std::string_view::npos ? v.size() : comma;
    std::string item = trim(v.substr(start, stop - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename E, typename Parse>
std::vector<E> to_enum_list(std::string_view key, std::string_view v, Parse parse, std::string_view want) {
  std::vector<E> out;
  for (const auto& item : split_list(v)) {
    const auto e = parse(item);
    if (!e) bad_value(key, item, want);
    out.push_back(*e);
  }
  return out;
}

template <typename E, typename Name>
std::string join_enum(const std::vector<E>& v, Name name) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::string(name(v[i]));
  return out;
}

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_real(v[i]);
  return out;
}

std::string join_strings(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <typename Member>
Field real_field(std::string key, Member member) {
  return {key, [=](const ExperimentConfig& c) { return fmt_real(std::invoke(member, c)); },
          [=](ExperimentConfig& c, std::string_view v) { std::invoke(member, c) = to_real(key, v); }};
}

template <typename Member>
Field size_field(std::string key, Member member) {
  return {key, [=](const ExperimentConfig& c) { return std::to_string(std::invoke(member, c)); },
          [=](ExperimentConfig& c, std::string_view v) {
            std::invoke(member, c) = static_cast<std::remove_reference_t<decltype(std::invoke(member, c))>>(
                to_u64(key, v));
          }};
}

template <typename Member>
Field bool_field(std::string key, Member member) {
  return {key, [=](const ExperimentConfig& c) { return std::string(std::invoke(member, c) ? "true" : "false"); },
          [=](ExperimentConfig& c, std::string_view v) { std::invoke(member, c) = to_bool(key, v); }};
}

// Member accessors for nested fields; std::invoke needs a callable returning a reference.
#define WIPER_REF(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(size_field("data.classes", WIPER_REF(data.classes)));
    f.push_back(size_field("data.train_per_class", WIPER_REF(data.train_per_class)));
    f.push_back(size_field("data.test_per_class", WIPER_REF(data.test_per_class)));
    f.push_back(size_field("data.height", WIPER_REF(data.input.height)));
    f.push_back(size_field("data.width", WIPER_REF(data.input.width)));
    f.push_back(size_field("data.channels", WIPER_REF(data.input.channels)));
    f.push_back(real_field("data.noise", WIPER_REF(data.noise)));
    f.push_back(real_field("data.contrast", WIPER_REF(data.contrast)));
    f.push_back(size_field("data.seed", WIPER_REF(data.seed)));
    f.push_back(real_field("data.holdout_ratio", WIPER_REF(data.holdout_ratio)));

    f.push_back({"model.arch",
                 [](const ExperimentConfig& c) { return std::string(c.arch.kind == ArchKind::cnn ? "cnn" : "mlp"); },
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "cnn") c.arch.kind = ArchKind::cnn;
                   else if (v == "mlp") c.arch.kind = ArchKind::mlp;
                   else bad_value("model.arch", v, "cnn or mlp");
                 }});
    f.push_back({"model.hidden", [](const ExperimentConfig& c) { return join_sizes(c.arch.hidden); },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.arch.hidden.clear();
                   for (const auto& item : split_list(v)) c.arch.hidden.push_back(to_size("model.hidden", item));
                 }});
    f.push_back({"model.purified_layer", [](const ExperimentConfig& c) { return c.purified_layer; },
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v.empty()) bad_value("model.purified_layer", v, "a layer name");
                   c.purified_layer = std::string(v);
                 }});

    f.push_back(size_field("victim.epochs", WIPER_REF(victim.recipe.epochs)));
    f.push_back(size_field("victim.batch_size", WIPER_REF(victim.recipe.batch_size)));
    f.push_back(real_field("victim.learning_rate", WIPER_REF(victim.recipe.sgd.learning_rate)));
    f.push_back(real_field("victim.momentum", WIPER_REF(victim.recipe.sgd.momentum)));
    f.push_back(real_field("victim.weight_decay", WIPER_REF(victim.recipe.sgd.weight_decay)));
    f.push_back(bool_field("victim.calibrate", WIPER_REF(victim.calibrate)));
    f.push_back(real_field("victim.min_asr", WIPER_REF(victim.min_asr)));
    f.push_back(real_field("victim.max_acc_gap", WIPER_REF(victim.max_acc_gap)));

    f.push_back({"poison.attack", [](const ExperimentConfig& c) { return std::string(attack_name(c.poison.attack)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   const auto a = parse_attack(v);
                   if (!a) bad_value("poison.attack", v, "badnet|blend|eta|invisible|sig|trojannn");
                   c.poison.attack = *a;
                 }});
    f.push_back({"poison.injection_rate",
                 [](const ExperimentConfig& c) {
                   return c.injection_rate ? fmt_real(*c.injection_rate) : std::string("auto");
                 },
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "auto") c.injection_rate.reset();
                   else c.injection_rate = to_real("poison.injection_rate", v);
                 }});
    f.push_back({"poison.target_label", [](const ExperimentConfig& c) { return std::to_string(c.poison.target_label); },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.poison.target_label = static_cast<std::uint32_t>(to_u64("poison.target_label", v));
                 }});
    f.push_back(size_field("poison.seed", WIPER_REF(poison.seed)));
    f.push_back(size_field("poison.patch_size", WIPER_REF(poison.patch_size)));
    f.push_back(size_field("poison.patch_row", WIPER_REF(poison.patch_row)));
    f.push_back(size_field("poison.patch_col", WIPER_REF(poison.patch_col)));
    f.push_back(real_field("poison.blend_ratio", WIPER_REF(poison.blend_ratio)));
    f.push_back(real_field("poison.eta_max_rotation_deg", WIPER_REF(poison.eta_max_rotation_deg)));
    f.push_back(real_field("poison.eta_scale_min", WIPER_REF(poison.eta_scale_min)));
    f.push_back(real_field("poison.eta_scale_max", WIPER_REF(poison.eta_scale_max)));
    f.push_back(real_field("poison.invisible_amplitude", WIPER_REF(poison.invisible_amplitude)));
    f.push_back(size_field("poison.invisible_resolution", WIPER_REF(poison.invisible_resolution)));
    f.push_back(real_field("poison.sig_delta", WIPER_REF(poison.sig_delta)));
    f.push_back(real_field("poison.sig_frequency", WIPER_REF(poison.sig_frequency)));
    f.push_back(size_field("poison.trojan_neurons", WIPER_REF(poison.trojan_neurons)));
    f.push_back(size_field("poison.trojan_steps", WIPER_REF(poison.trojan_steps)));
    f.push_back(real_field("poison.trojan_step_size", WIPER_REF(poison.trojan_step_size)));

    f.push_back({"defense.kind", [](const ExperimentConfig& c) { return std::string(defense_name(c.defense)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   const auto d = parse_defense(v);
                   if (!d) bad_value("defense.kind", v, "none|wiper|fine_pruning|fine_tuning|kd");
                   c.defense = *d;
                 }});

    f.push_back(real_field("purify.alpha", WIPER_REF(purify.alpha)));
    f.push_back(real_field("purify.beta0", WIPER_REF(purify.beta0)));
    f.push_back(real_field("purify.eta", WIPER_REF(purify.eta)));
    f.push_back(size_field("purify.epochs", WIPER_REF(purify.epochs)));
    f.push_back(real_field("purify.learning_rate", WIPER_REF(purify.learning_rate)));
    f.push_back(size_field("purify.batch_size", WIPER_REF(purify.batch_size)));
    f.push_back({"purify.regularizer",
                 [](const ExperimentConfig& c) { return std::string(regularizer_name(c.purify.regularizer)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   const auto r = parse_regularizer(v);
                   if (!r) bad_value("purify.regularizer", v, "ar|l1|l2");
                   c.purify.regularizer = *r;
                 }});
    f.push_back(bool_field("purify.literal_ar", WIPER_REF(purify.literal_ar)));
    f.push_back({"purify.metric", [](const ExperimentConfig& c) { return std::string(metric_name(c.purify.metric)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   const auto m = parse_metric(v);
                   if (!m) bad_value("purify.metric", v, "bs|am");
                   c.purify.metric = *m;
                 }});
    f.push_back(bool_field("purify.freeze_selection", WIPER_REF(purify.freeze_selection)));

    f.push_back(size_field("baseline.epochs", WIPER_REF(baseline.epochs)));
    f.push_back(size_field("baseline.batch_size", WIPER_REF(baseline.batch_size)));
    f.push_back(real_field("baseline.ft_learning_rate", WIPER_REF(baseline.ft_learning_rate)));
    f.push_back(real_field("baseline.ft_momentum", WIPER_REF(baseline.ft_momentum)));
    f.push_back(real_field("baseline.ft_weight_decay", WIPER_REF(baseline.ft_weight_decay)));
    f.push_back(real_field("baseline.pruning_rate", WIPER_REF(baseline.pruning_rate)));
    f.push_back({"baseline.pruning_metric",
                 [](const ExperimentConfig& c) { return std::string(metric_name(c.baseline.pruning_metric)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   const auto m = parse_metric(v);
                   if (!m) bad_value("baseline.pruning_metric", v, "bs|am");
                   c.baseline.pruning_metric = *m;
                 }});
    f.push_back(real_field("baseline.kd_ce_weight", WIPER_REF(baseline.kd_ce_weight)));
    f.push_back(real_field("baseline.kd_kl_weight", WIPER_REF(baseline.kd_kl_weight)));
    f.push_back(real_field("baseline.kd_temperature", WIPER_REF(baseline.kd_temperature)));
    f.push_back(size_field("baseline.kd_epochs", WIPER_REF(baseline.kd_epochs)));
    f.push_back(real_field("baseline.kd_learning_rate", WIPER_REF(baseline.kd_learning_rate)));
    f.push_back(real_field("baseline.kd_momentum", WIPER_REF(baseline.kd_momentum)));

    f.push_back({"matrix.defenses", [](const ExperimentConfig& c) { return join_enum(c.matrix.defenses, defense_name); },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.matrix.defenses = to_enum_list<DefenseKind>("matrix.defenses", v, parse_defense, "defense name");
                 }});
    f.push_back({"matrix.attacks", [](const ExperimentConfig& c) { return join_enum(c.matrix.attacks, attack_name); },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.matrix.attacks = to_enum_list<AttackKind>("matrix.attacks", v, parse_attack, "attack name");
                 }});
    f.push_back({"matrix.alphas", [](const ExperimentConfig& c) { return join_reals(c.matrix.alphas); },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.matrix.alphas.clear();
                   for (const auto& item : split_list(v)) c.matrix.alphas.push_back(to_real("matrix.alphas", item));
                 }});
    f.push_back({"matrix.data_ratios", [](const ExperimentConfig& c) { return join_reals(c.matrix.data_ratios); },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.matrix.data_ratios.clear();
                   for (const auto& item : split_list(v))
                     c.matrix.data_ratios.push_back(to_real("matrix.data_ratios", item));
                 }});
    f.push_back({"matrix.layers", [](const ExperimentConfig& c) { return join_strings(c.matrix.layers); },
                 [](ExperimentConfig& c, std::string_view v) { c.matrix.layers = split_list(v); }});
    f.push_back({"matrix.regularizers",
                 [](const ExperimentConfig& c) { return join_enum(c.matrix.regularizers, regularizer_name); },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.matrix.regularizers =
                       to_enum_list<RegularizerKind>("matrix.regularizers", v, parse_regularizer, "ar|l1|l2");
                 }});
    f.push_back({"matrix.metrics", [](const ExperimentConfig& c) { return join_enum(c.matrix.metrics, metric_name); },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.matrix.metrics = to_enum_list<ImportanceMetric>("matrix.metrics", v, parse_metric, "bs|am");
                 }});
    f.push_back(size_field("matrix.replicates", WIPER_REF(matrix.replicates)));

    f.push_back(size_field("run.seed", WIPER_REF(seed)));
    f.push_back({"run.precision", [](const ExperimentConfig& c) { return std::string(precision_name(c.precision)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   const auto p = parse_precision(v);
                   if (!p) bad_value("run.precision", v, "f32 or f64");
                   c.precision = *p;
                 }});
    f.push_back({"run.out", [](const ExperimentConfig& c) { return c.out_dir.string(); },
                 [](ExperimentConfig& c, std::string_view v) { c.out_dir = std::string(v); }});
    return f;
  }();
  return table;
}

#undef WIPER_REF

const Field& find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  fail(ErrorCode::config, "config: unknown key '" + std::string(key) + "'");
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  find_field(trim(key)).set(cfg, trim(value));
}

std::string get_config_value(const ExperimentConfig& cfg, std::string_view key) { return find_field(key).get(cfg); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::config, "config line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(cfg, std::string_view(t).substr(0, eq), std::string_view(t).substr(eq + 1));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open config " + path.string());
  return parse_config(in);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string() + " for writing");
  out << serialize_config(cfg);
}

std::string config_hash(const ExperimentConfig& cfg) {
  static constexpr char hex[] = "0123456789abcdef";
  std::uint64_t h = fnv1a(serialize_config(cfg));
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xF];
  return out;
}

}  // namespace wiper
