#pragma once

// A fixed deal and route shared by the prompt and verifier tests.

#include <array>

#include "genprobe/gp_env.hpp"
#include "genprobe/nav_env.hpp"

namespace fixtures {

inline const std::array<genprobe::gp::Card, 4> kSampleCards{
    genprobe::gp::Card{1, genprobe::gp::Suit::Spade}, genprobe::gp::Card{3, genprobe::gp::Suit::Heart},
    genprobe::gp::Card{13, genprobe::gp::Suit::Club}, genprobe::gp::Card{6, genprobe::gp::Suit::Diamond}};

inline genprobe::nav::Route sample_route() {
  using namespace genprobe::nav;
  Route r;
  r.max_straight = 3;
  r.start_heading = Heading::S;
  r.waypoints = {{0, 0}, {1, 0}, {2, 0}, {2, 1}, {3, 1}};
  r.turns = {{0, Heading::E}, {2, Heading::N}, {3, Heading::E}};
  r.landmarks = {{"Hotel 32One", 2, Heading::SW},
                 {"Dragon Gate Chinatown SF", 3, Heading::NE},
                 {"Café de la Presse", 4, Heading::S}};
  r.destination = "Café de la Presse";
  r.expert = compute_expert(r);
  r.instructions = render_instructions(r);
  return r;
}

}  // namespace fixtures
