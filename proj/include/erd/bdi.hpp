/*
 * Copyright 2026 The ERD Toolkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Closed vocabulary of the 21 Beck Depression Inventory (BDI-II) items.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "erd/common.hpp"

namespace erd {

inline constexpr int kBdiVersion = 2;

enum class BdiSymptom {
  sadness,
  pessimism,
  past_failure,
  loss_of_pleasure,
  guilty_feelings,
  punishment_feelings,
  self_dislike,
  self_criticalness,
  suicidal_thoughts,
  crying,
  agitation,
  loss_of_interest,
  indecisiveness,
  worthlessness,
  loss_of_energy,
  changes_in_sleep,
  irritability,
  changes_in_appetite,
  concentration_difficulty,
  tiredness_or_fatigue,
  loss_of_interest_in_sex,
};

inline constexpr std::size_t kBdiItemCount = 21;

struct BdiItem {
  BdiSymptom symptom;
  std::string_view id;       // stable machine identifier
  std::string_view english;
  std::string_view spanish;  // canonical name used in prompts and model output
};

inline constexpr std::array<BdiItem, kBdiItemCount> kBdiItems{{
    {BdiSymptom::sadness, "sadness", "sadness", "tristeza"},
    {BdiSymptom::pessimism, "pessimism", "pessimism", "pesimismo"},
    {BdiSymptom::past_failure, "past_failure", "past failure", "fracaso"},
    {BdiSymptom::loss_of_pleasure, "loss_of_pleasure", "loss of pleasure", "pérdida de placer"},
    {BdiSymptom::guilty_feelings, "guilty_feelings", "guilt feelings", "sentimientos de culpa"},
    {BdiSymptom::punishment_feelings, "punishment_feelings", "punishment feelings", "sentimientos de castigo"},
    {BdiSymptom::self_dislike, "self_dislike", "self-dislike", "disconformidad con uno mismo"},
    {BdiSymptom::self_criticalness, "self_criticalness", "self-criticalness", "autocrítica"},
    {BdiSymptom::suicidal_thoughts, "suicidal_thoughts", "suicidal thoughts or wishes", "pensamientos o deseos suicidas"},
    {BdiSymptom::crying, "crying", "crying", "llanto"},
    {BdiSymptom::agitation, "agitation", "agitation", "agitación"},
    {BdiSymptom::loss_of_interest, "loss_of_interest", "loss of interest", "pérdida de interés"},
    {BdiSymptom::indecisiveness, "indecisiveness", "indecisiveness", "indecisión"},
    {BdiSymptom::worthlessness, "worthlessness", "worthlessness", "desvalorización"},
    {BdiSymptom::loss_of_energy, "loss_of_energy", "loss of energy", "pérdida de energía"},
    {BdiSymptom::changes_in_sleep, "changes_in_sleep", "changes in sleeping pattern", "cambios en los hábitos de sueño"},
    {BdiSymptom::irritability, "irritability", "irritability", "irritabilidad"},
    {BdiSymptom::changes_in_appetite, "changes_in_appetite", "changes in appetite", "cambios en el apetito"},
    {BdiSymptom::concentration_difficulty, "concentration_difficulty", "concentration difficulty", "dificultad de concentración"},
    {BdiSymptom::tiredness_or_fatigue, "tiredness_or_fatigue", "tiredness or fatigue", "cansancio o fatiga"},
    {BdiSymptom::loss_of_interest_in_sex, "loss_of_interest_in_sex", "loss of interest in sex", "pérdida de interés en el sexo"},
}};

inline const BdiItem& bdi_item(BdiSymptom s) { return kBdiItems[static_cast<std::size_t>(s)]; }
inline std::string_view bdi_id(BdiSymptom s) { return bdi_item(s).id; }
inline std::string_view bdi_spanish(BdiSymptom s) { return bdi_item(s).spanish; }

/// Exact lookup by machine identifier (the JSONL file format).
inline std::optional<BdiSymptom> bdi_from_id(std::string_view id) {
  for (const auto& item : kBdiItems)
    if (item.id == id) return item.symptom;
  return std::nullopt;
}

namespace detail {

inline const std::unordered_map<std::string, BdiSymptom>& bdi_alias_table() {
  static const auto table = [] {
    std::unordered_map<std::string, BdiSymptom> t;
    for (const auto& item : kBdiItems) {
      t.emplace(text::normalize_key(item.id), item.symptom);
      t.emplace(text::normalize_key(item.english), item.symptom);
      t.emplace(text::normalize_key(item.spanish), item.symptom);
      std::string spaced(item.id);
      for (char& c : spaced)
        if (c == '_') c = ' ';
      t.emplace(spaced, item.symptom);
    }
    // Common paraphrases seen in Spanish model output.
    const std::pair<const char*, BdiSymptom> extra[] = {
        {"ideación suicida", BdiSymptom::suicidal_thoughts},
        {"pensamientos suicidas", BdiSymptom::suicidal_thoughts},
        {"deseos suicidas", BdiSymptom::suicidal_thoughts},
        {"desesperanza", BdiSymptom::pessimism},
        {"sentimiento de fracaso", BdiSymptom::past_failure},
        {"fracaso pasado", BdiSymptom::past_failure},
        {"anhedonia", BdiSymptom::loss_of_pleasure},
        {"culpa", BdiSymptom::guilty_feelings},
        {"castigo", BdiSymptom::punishment_feelings},
        {"autodesprecio", BdiSymptom::self_dislike},
        {"insatisfacción con uno mismo", BdiSymptom::self_dislike},
        {"inutilidad", BdiSymptom::worthlessness},
        {"insomnio", BdiSymptom::changes_in_sleep},
        {"cambios en el sueño", BdiSymptom::changes_in_sleep},
        {"cambios en el patrón de sueño", BdiSymptom::changes_in_sleep},
        {"cansancio", BdiSymptom::tiredness_or_fatigue},
        {"fatiga", BdiSymptom::tiredness_or_fatigue},
        {"cambios de apetito", BdiSymptom::changes_in_appetite},
        {"dificultad para concentrarse", BdiSymptom::concentration_difficulty},
        {"falta de energía", BdiSymptom::loss_of_energy},
        {"pérdida de interés sexual", BdiSymptom::loss_of_interest_in_sex},
        {"guilt", BdiSymptom::guilty_feelings},
        {"suicidal ideation", BdiSymptom::suicidal_thoughts},
    };
    for (const auto& [name, s] : extra) t.emplace(text::normalize_key(name), s);
    return t;
  }();
  return table;
}

}  // namespace detail

/// Lenient lookup used on model output: case, accent and whitespace
/// insensitive, accepts ids, English and Spanish names plus a few aliases.
inline std::optional<BdiSymptom> bdi_from_name(std::string_view name) {
  const auto& table = detail::bdi_alias_table();
  auto it = table.find(text::normalize_key(name));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

}  // namespace erd
