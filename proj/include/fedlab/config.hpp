#pragma once

#include <cstdint>
#include <string>

namespace fedlab {

struct DataConfig {
  std::string dataset = "synth";  // synth | mnist
  std::string mnist_dir = "data/mnist";
  int synth_classes = 10;
  int synth_per_class = 50;
  std::int64_t train_subset = 0;  // 0 = use everything
  std::int64_t test_subset = 0;
  double phi = 0.5;  // Dirichlet concentration; smaller = more skewed
};

struct FlConfig {
  int clients = 100;     // N
  int per_round = 10;    // M
  int rounds = 900;      // T
  int local_epochs = 2;  // E
  double lr = 0.01;
  int batch = 64;
  int test_batch = 512;
  std::uint64_t seed = 42;
};

struct AttackConfig {
  std::string kind = "venomancer";  // none | venomancer | blend_tod | eps_bounded
  int malicious = 2;                // P, fixed ids 0..P-1
  int frequency = 1;                // k, attack every k-th round
  double alpha = 0.5;               // clean/backdoor mix in the injection loss
  double beta = 0.01;               // backdoor/visual mix in the generator loss
  double atk_lr = 0.0002;
  int poison_epochs = 5;
  double epsilon = 0.07;  // eps_bounded noise budget
  double gamma = 0.001;   // blend_tod training blend ratio
  std::string atlas = "builtin";  // builtin | directory with <class>.pgm files
};

struct DefenseConfig {
  std::string kind = "fedavg";
  double nc_rho = 1.0;
  double dp_rho = 1.0;
  double dp_sigma = 0.002;
  int krum_f = -1;  // -1: default to attack.malicious
  int mk_m = -1;    // -1: default to per_round - malicious
  double rlr_threshold = 2.0;
  double rlr_server_lr = 1.0;
  double fedrad_server_frac = 0.1;
  int fedrad_epochs = 2;
  double fedrad_temperature = 1.0;
  double fedrad_lr = 0.01;
  int ds_seeds = 3;
  int ds_noise_samples = 20000;
  double ds_tau = 1.0 / 3.0;
  double ds_te_frac = 0.01;
  double ds_clip = 1.0;
  int rb_pca_dims = 2;
  int rb_clusters = 2;
};

struct EvalConfig {
  int stride = 1;  // evaluate every stride-th round (final round always)
  int dump_samples = 0;
};

struct ExperimentConfig {
  DataConfig data;
  FlConfig fl;
  AttackConfig attack;
  DefenseConfig defense;
  EvalConfig eval;

  bool operator==(const ExperimentConfig&) const = default;
};

// Parses a sectioned key=value document. Unknown sections/keys are
// rejected by name; the result is validated and defaults are resolved.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

// Cross-field validation; resolves -1 sentinels (krum_f, mk_m).
void validate_config(ExperimentConfig& cfg);

// Canonical dump of a resolved config. parse_config_text(echo_config(c))
// reproduces c exactly.
std::string echo_config(const ExperimentConfig& cfg);

// Human-readable list of available attacks/defenses and their parameters.
std::string list_catalog();

}  // namespace fedlab
