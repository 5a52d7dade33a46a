/* Runs one greedy episode on the desk scenario.
 *
 *   cargo build --release -p hmppo-ffi
 *   cc crates/ffi/examples/greedy.c -Icrates/ffi/include -Ltarget/release -lhmppo_ffi -lm -lpthread -ldl -o greedy
 */
#include <stdio.h>

#include "hmppo.h"

int main(void) {
  HmppoScenario *scenario = NULL;
  HmppoEnv *env = NULL;
  HmppoController *greedy = NULL;
  double satisfaction = 0.0;
  char msg[256];

  if (hmppo_scenario_desk(&scenario) != HMPPO_STATUS_OK ||
      hmppo_env_new(scenario, 0.8, HMPPO_PATTERN_DIURNAL, 1, &env) != HMPPO_STATUS_OK ||
      hmppo_controller_greedy(&greedy) != HMPPO_STATUS_OK ||
      hmppo_run_episode(greedy, env, &satisfaction) != HMPPO_STATUS_OK) {
    hmppo_last_error(msg, sizeof msg);
    fprintf(stderr, "hmppo: %s\n", msg);
    return 1;
  }
  printf("hmppo %s: greedy satisfaction at load 0.8 = %.3f\n", hmppo_version(), satisfaction);

  hmppo_controller_free(greedy);
  hmppo_env_free(env);
  hmppo_scenario_free(scenario);
  return 0;
}
