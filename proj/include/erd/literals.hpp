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

// Every natural-language literal used by the prompt builder and the response
// parser. The default-constructed value is the canonical Spanish set; a JSON
// file with the same keys (resources/literals_es.json) can replace it for
// translation without touching code. Prompt format instructions and parser
// headers both read from here, so they cannot drift apart.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "erd/common.hpp"

namespace erd {

struct Literals {
  std::string language = "es";

  // Prompt sections, in rendering order.
  std::string section_prefix = "### ";
  std::string role_title = "Rol";
  std::string task_title = "Definición de la tarea";
  std::string examples_title = "Ejemplos";
  std::string considerations_title = "Consideraciones";
  std::string input_title = "Entrada";

  std::string default_role = "Eres un modelo diseñado para analizar y detectar usuarios con depresión.";
  std::string task_intro = "Tu tarea es la siguiente:";
  std::vector<std::string> step_numerals = {"i", "ii", "iii", "iv", "v", "vi", "vii"};
  std::vector<std::string> task_steps = {
      "Lectura inicial de posts: lee la lista de posts del usuario para comprender el contexto general.",
      "Análisis y extracción de posts relevantes: analiza y extrae los posts donde el usuario presenta o expresa "
      "síntomas del Cuestionario BDI.",
      "Lista de observaciones: utiliza el Cuestionario BDI para construir observaciones, describiendo los posts "
      "extraídos y su vínculo con los síntomas del Cuestionario.",
      "Verificación: verifica y conserva los posts más relevantes.",
      "Conclusión: elabora un breve resumen basado en las observaciones.",
      "Predicción: indica si el usuario es positivo o negativo para depresión.",
      "Post detectado: indica el número de post donde el usuario muestra claros signos de depresión.",
  };

  std::string no_examples = "(sin ejemplos)";
  std::string example_title = "Ejemplo";
  std::string example_posts = "Posts:";
  std::string example_reasoning = "Respuesta:";

  std::vector<std::string> default_considerations = {
      "Basa cada observación en posts concretos del usuario y cita sus números.",
      "No asignes síntomas que el usuario no exprese; menciones de terceros o episodios pasados sin síntomas "
      "actuales no bastan para una predicción positiva.",
      "Si no encuentras síntomas, escribe una única observación \"sin observaciones\".",
  };
  std::string bdi_title = "Síntomas del Cuestionario BDI:";
  std::string format_title = "Formato de salida (respeta exactamente estos encabezados y este orden):";

  std::string user_marker = "Usuario:";
  std::string post_label = "Post";

  // Output grammar.
  std::string observations_header = "Observaciones";
  std::string conclusion_header = "Conclusión";
  std::string prediction_header = "Predicción";
  std::string detected_header = "Post detectado";
  std::string positive_token = "positivo";
  std::string negative_token = "negativo";
  std::string none_marker = "ninguno";
  std::vector<std::string> none_aliases = {"ninguno", "ninguna", "none", "null", "n/a", "no aplica", "-"};
  std::string no_findings = "sin observaciones";
  std::string citation_singular = "post";
  std::string citation_plural = "posts";
  std::string observation_placeholder = "- posts N, M [síntoma, síntoma]: descripción del vínculo entre los posts y los síntomas";
  std::string conclusion_placeholder = "breve resumen basado en las observaciones";
  std::string detected_placeholder = "número de post, o \"ninguno\" si la predicción es negativa";

  // Repair messages for the verification loop. {x} placeholders are filled in.
  std::string repair_intro = "Tu respuesta anterior no cumple el formato requerido.";
  std::string repair_missing_section = "Falta el bloque \"{section}:\". Incluye los cuatro bloques en orden.";
  std::string repair_bad_prediction = "El valor de \"{section}:\" debe ser exactamente \"{positive}\" o \"{negative}\".";
  std::string repair_bad_post_number =
      "\"{section}:\" y las citas de posts deben ser números entre 1 y {max}; usa \"{none}\" si la predicción es "
      "negativa.";
  std::string repair_unknown_symptom = "El síntoma \"{symptom}\" no pertenece al Cuestionario BDI. Usa solo: {list}.";
  std::string repair_empty_output = "La respuesta anterior estaba vacía.";
  std::string repair_outro = "Responde de nuevo siguiendo el formato de salida indicado.";
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    Literals, language, section_prefix, role_title, task_title, examples_title, considerations_title, input_title,
    default_role, task_intro, step_numerals, task_steps, no_examples, example_title, example_posts, example_reasoning,
    default_considerations, bdi_title, format_title, user_marker, post_label, observations_header, conclusion_header,
    prediction_header, detected_header, positive_token, negative_token, none_marker, none_aliases, no_findings,
    citation_singular, citation_plural, observation_placeholder, conclusion_placeholder, detected_placeholder,
    repair_intro, repair_missing_section, repair_bad_prediction, repair_bad_post_number, repair_unknown_symptom,
    repair_empty_output, repair_outro)

inline const Literals& spanish_literals() {
  static const Literals lit{};
  return lit;
}

inline Literals load_literals(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, path.string());
  try {
    Literals lit = nlohmann::json::parse(in).get<Literals>();
    if (lit.task_steps.size() != 7 || lit.step_numerals.size() != 7)
      throw Error(Errc::config_invalid, "literals must define exactly 7 task steps and numerals");
    return lit;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_invalid, path.string() + ": " + e.what());
  }
}

/// Replaces every "{key}" in `tmpl`.
inline std::string fill(std::string tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    for (auto pos = tmpl.find(token); pos != std::string::npos; pos = tmpl.find(token, pos + value.size()))
      tmpl.replace(pos, token.size(), value);
  }
  return tmpl;
}

}  // namespace erd
